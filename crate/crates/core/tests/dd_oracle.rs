//! The extended-precision scalar used as a finite-difference oracle, checked
//! against 50-digit reference values.

mod common;

use common::Dd;
use proptest::prelude::*;
use vqmc::scalar::Scalar;

fn close(x: Dd, hi: f64, lo: f64) -> bool {
    let d = (x - Dd { hi, lo }).value();
    d.abs() <= 1e-30 * hi.abs().max(1e-300)
}

#[test]
fn elementary_functions_match_reference_digits() {
    let cases = [
        ("exp(1)", Dd::new(1.0).exp(), 2.718281828459045, 1.4456468917292502e-16),
        ("sqrt(2)", Dd::new(2.0).sqrt(), 1.4142135623730951, -9.667293313452913e-17),
        ("ln(3)", Dd::new(3.0).ln(), 1.0986122886681098, -9.07129723500153e-17),
        ("exp(-5.5)", Dd::new(-5.5).exp(), 0.004086771438464067, 3.9646859782158316e-19),
        ("exp(30.25)", Dd::new(30.25).exp(), 13721704977464.906, -0.0009393237907290634),
        ("expm1(0.001)", Dd::new(0.001).exp_m1(), 0.0010005001667083417, 2.598544094203749e-20),
        ("ln(1.25e-4)", Dd::new(0.000125).ln(), -8.987196820661973, 4.736063199842926e-17),
        ("tanh(0.3)", Dd::new(0.3).tanh(), 0.2913126124515909, -6.4602656586469586e-18),
        ("tanh(2.5)", Dd::new(2.5).tanh(), 0.9866142981514303, -2.4529238788172874e-17),
        ("tanh(-0.7)", Dd::new(-0.7).tanh(), -0.6043677771171635, 2.7916180015425346e-17),
    ];
    for (name, got, hi, lo) in cases {
        assert!(close(got, hi, lo), "{name}: {got:?}");
    }
}

proptest! {
    #[test]
    fn exp_ln_round_trip(x in 1e-3f64..1e3) {
        let d = Dd::new(x);
        let back = d.ln().exp();
        prop_assert!(((back - d).value() / x).abs() < 1e-30);
    }

    #[test]
    fn division_inverts_multiplication(a in -1e3f64..1e3, b in 1e-3f64..1e3) {
        let q = Dd::new(a) * Dd::new(b) / Dd::new(b);
        prop_assert!((q - Dd::new(a)).value().abs() <= 1e-30 * a.abs());
    }

    #[test]
    fn sqrt_squares_back(x in 1e-6f64..1e6) {
        let s = Dd::new(x).sqrt();
        prop_assert!(((s * s - Dd::new(x)).value() / x).abs() < 1e-30);
    }
}
