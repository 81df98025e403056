mod oracle;

use myotwin_core::dynamics::ImpedanceParams;
use myotwin_core::protocol::ImpedanceTable;
use oracle::{plant_convergence, plant_step_error, response_period, step_response};

fn table() -> ImpedanceTable {
    ImpedanceTable::default()
}

#[test]
fn high_setting_matches_underdamped_closed_form() {
    let err = plant_step_error(&table().high, 1e-3);
    assert!(err < 1e-6, "max error {err:e}");
}

#[test]
fn low_setting_matches_overdamped_closed_form() {
    let err = plant_step_error(&table().low, 1e-3);
    assert!(err < 1e-6, "max error {err:e}");
}

#[test]
fn fourth_order_convergence() {
    for p in [table().low, table().high] {
        let ratio = plant_convergence(&p, 8e-3);
        assert!(ratio >= 8.0, "K={} ratio {ratio}", p.stiffness);
    }
}

#[test]
fn critically_damped_branch() {
    // ζ = 1 exactly: B = 2√(KI).
    let p = ImpedanceParams::new(0.04, 2.0 * (4.0f64 * 0.04).sqrt(), 4.0).unwrap();
    assert!(plant_step_error(&p, 1e-3) < 1e-6);
}

#[test]
fn closed_form_settles_at_static_deflection() {
    let p = table().high;
    let t = 40.0 * response_period(&p);
    assert!((step_response(&p, 0.7, t) - 0.1).abs() < 1e-12);
}
