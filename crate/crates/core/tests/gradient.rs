mod oracle;

use myotwin_core::protocol::SessionConfig;
use oracle::{gradient_draw_error, PARAMETERS};

#[test]
fn backprop_matches_central_differences() {
    let scaler = SessionConfig::default().target_scaler().unwrap();
    let worst = (0..100).map(|k| gradient_draw_error(1000 + k, &scaler)).fold(0.0, f64::max);
    assert!(worst < 1e-6, "worst relative error {worst:e}");
}

#[test]
fn parameter_count() {
    assert_eq!(PARAMETERS, 48);
}
