//! Reverse-mode gradients against central differences, op by op and for
//! every architecture end to end.

#[path = "support/gradient_suite.rs"]
mod gradient_suite;

use gradient_suite::{model_check, model_max_error, Check, TRIALS};
use stormstack::model::{Architecture, ModelConfig};

fn assert_all(checks: Vec<Check>) {
    for c in checks {
        assert!(c.passed(), "{}: max relative error {:e} >= {:e}", c.name, c.worst, c.tolerance);
    }
}

#[test]
fn matmul_both_operands() {
    assert_all(gradient_suite::matmul_checks());
}

#[test]
fn elementwise_ops() {
    assert_all(gradient_suite::elementwise_checks());
}

#[test]
fn broadcasting_and_reshaping_ops() {
    assert_all(gradient_suite::structural_checks());
}

#[test]
fn conv1d_every_operand_and_padding() {
    assert_all(gradient_suite::conv1d_checks());
}

#[test]
fn lstm_cell_and_attention() {
    assert_all(gradient_suite::layer_checks());
}

#[test]
fn full_model_tiny_config() {
    assert_all(vec![model_check(Architecture::ConvBiLstmAttention, TRIALS)]);
}

#[test]
fn baselines_pass_the_same_checks() {
    assert_all(
        [Architecture::Rnn, Architecture::Lstm, Architecture::BiLstm]
            .map(|a| model_check(a, 5))
            .to_vec(),
    );
}

#[test]
fn attention_model_without_conv() {
    // T=4, D=3, hidden=5 with no conv; the attention width 10 splits into 2 heads of 5.
    let config = ModelConfig {
        input_dim: 3,
        steps: 4,
        conv_layers: Vec::new(),
        lstm_hidden: 5,
        attention_heads: 2,
        head_dim: 5,
        ..ModelConfig::default()
    };
    let err = model_max_error(&config, 0);
    assert!(err < gradient_suite::MODEL_TOL, "{err:e}");
}
