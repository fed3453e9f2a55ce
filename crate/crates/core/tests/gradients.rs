//! Analytic gradients of the composite loss against central differences,
//! tensor by tensor.

mod common;

use ftsmoe_core::loss::LossConfig;

fn check(n_layers: usize, d_text: usize, alpha: f64) {
    let errs = common::gradient_audit(&common::audit_config(n_layers, d_text), &LossConfig { delta: 1.0, alpha });
    for (name, rel) in &errs {
        assert!(*rel < 1e-3, "{name}: rel err {rel:.3e}");
    }
}

#[test]
fn one_layer_with_balance_loss() {
    check(1, 3, 0.02);
}

#[test]
fn two_layers_with_strong_balance_loss() {
    check(2, 3, 0.5);
}

#[test]
fn identity_text_projection_without_balance_loss() {
    check(1, 8, 0.0);
}
