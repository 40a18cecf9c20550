mod common;

use std::f64::consts::PI;

use common::{potential_kernel, slope};

#[test]
fn potential_kernel_closed_forms() {
    assert!((potential_kernel(1, 0) - 1.0).abs() < 1e-13);
    assert!((potential_kernel(0, -1) - 1.0).abs() < 1e-13);
    assert!((potential_kernel(1, 1) - 4.0 / PI).abs() < 1e-13);
    assert!((potential_kernel(2, 0) - (4.0 - 8.0 / PI)).abs() < 1e-13);
    assert!((potential_kernel(2, 1) - (8.0 / PI - 1.0)).abs() < 1e-13);
    assert!((potential_kernel(2, 2) - 16.0 / (3.0 * PI)).abs() < 1e-13);
}

#[test]
fn potential_kernel_is_harmonic_off_the_origin() {
    for (x, y) in [(1, 0), (3, 2), (5, -4), (9, 1)] {
        let a = potential_kernel(x, y);
        let sum = potential_kernel(x + 1, y) + potential_kernel(x - 1, y) + potential_kernel(x, y + 1) + potential_kernel(x, y - 1);
        assert!((sum - 4.0 * a).abs() < 1e-12, "({x},{y})");
    }
}

#[test]
fn potential_kernel_grows_like_log() {
    let a = potential_kernel(40, 0);
    let expected = 2.0 / PI * 40f64.ln() + (2.0 * 0.5772156649015329 + 8f64.ln()) / PI;
    assert!((a - expected).abs() < 1e-3, "{a} vs {expected}");
}

#[test]
fn slope_of_a_line() {
    assert!((slope(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]) - 2.0).abs() < 1e-15);
}
