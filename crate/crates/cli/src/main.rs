fn main() {
    std::process::exit(stormstack_cli::run(std::env::args_os()));
}
