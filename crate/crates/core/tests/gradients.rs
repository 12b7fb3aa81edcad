//! Central finite-difference checks of every backward pass.

mod common;

use common::gradsuite;

const TOL: f64 = 1e-4;

#[test]
fn linear() {
    let worst = gradsuite::linear();
    assert!(worst < TOL, "worst relative error {worst:e}");
}

#[test]
fn layer_norm() {
    let worst = gradsuite::layer_norm();
    assert!(worst < TOL, "worst relative error {worst:e}");
}

#[test]
fn attention() {
    let worst = gradsuite::attention();
    assert!(worst < TOL, "worst relative error {worst:e}");
}

#[test]
fn multi_head_attention() {
    let worst = gradsuite::multi_head_attention();
    assert!(worst < TOL, "worst relative error {worst:e}");
}

#[test]
fn conv1d() {
    let worst = gradsuite::conv1d();
    assert!(worst < TOL, "worst relative error {worst:e}");
}

#[test]
fn feed_forward() {
    let worst = gradsuite::feed_forward();
    assert!(worst < TOL, "worst relative error {worst:e}");
}

#[test]
fn encoder_layer() {
    let worst = gradsuite::encoder_layer();
    assert!(worst < TOL, "worst relative error {worst:e}");
}

#[test]
fn decoder_layer() {
    let worst = gradsuite::decoder_layer();
    assert!(worst < TOL, "worst relative error {worst:e}");
}

#[test]
fn cross_entropy_loss() {
    let worst = gradsuite::cross_entropy_loss();
    assert!(worst < TOL, "worst relative error {worst:e}");
}

#[test]
fn cumulative_l2_loss() {
    let worst = gradsuite::cumulative_l2_loss();
    assert!(worst < TOL, "worst relative error {worst:e}");
}

#[test]
fn tcn_encoder() {
    let worst = gradsuite::tcn_encoder();
    assert!(worst < TOL, "worst relative error {worst:e}");
}

#[test]
fn recognizer_end_to_end() {
    let worst = gradsuite::recognizer_end_to_end();
    assert!(worst < TOL, "worst relative error {worst:e}");
}

#[test]
fn predictor_multitask_end_to_end() {
    let worst = gradsuite::predictor_multitask_end_to_end();
    assert!(worst < TOL, "worst relative error {worst:e}");
}
