//! Library values against closed forms evaluated independently here.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use spectral_wick::processes::SpectralProcesses;
use spectral_wick::report::suite::{smeared_vector, smooth_quartet};
use spectral_wick::unification::{ordered_product_defect, Direction};
use spectral_wick::wick::{ito_table_probe, Differential, ItoProbe, WickSpace};
use spectral_wick::SpectralGrid;

fn grid(bins: usize) -> Arc<SpectralGrid> {
    Arc::new(SpectralGrid::uniform(1.0, bins, 1).unwrap())
}

/// Midpoint samples of `(1 + ω) + 0.5iω`, times `√Δω`, normalized.
fn ramp(bins: usize) -> Vec<C64> {
    let h = 1.0 / bins as f64;
    let raw: Vec<C64> = (0..bins)
        .map(|j| {
            let w = (j as f64 + 0.5) * h;
            C64::new(1.0 + w, 0.5 * w) * h.sqrt()
        })
        .collect();
    let n = raw.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    raw.into_iter().map(|z| z / n).collect()
}

// F⁺F⁺Φ keeps only the doubly occupied diagonal, √2·c_m², the off-diagonal
// pairs cancelling through the prefix sign.
fn square_closed_form(c: &[C64]) -> f64 {
    (2.0 * c.iter().map(|z| z.norm_sqr().powi(2)).sum::<f64>()).sqrt()
}

#[test]
fn smeared_vector_matches_sampling_convention() {
    for n in [3, 8] {
        let v = smeared_vector(&grid(n));
        for (a, b) in v.coeffs().iter().zip(ramp(n)) {
            assert!((a - b).norm() < 1e-15);
        }
    }
}

#[test]
fn car_square_and_ordered_products_closed_form() {
    for n in [4, 8, 16, 32] {
        let g = grid(n);
        let expected = square_closed_form(&ramp(n));
        let p = SpectralProcesses::build(&g, 2).unwrap();
        let phi = smeared_vector(&g);
        let square = p.car_defect(&phi, &phi, 1.0).unwrap().square;
        assert!((square - expected).abs() < 1e-12, "N={n}: {square} vs {expected}");
        let pair = [phi.clone(), phi];
        for dir in [Direction::FermiFromBose, Direction::BoseFromFermi] {
            let d = ordered_product_defect(&p, &pair, 1.0, dir).unwrap();
            assert!((d - expected).abs() < 1e-12, "N={n} {dir:?}: {d} vs {expected}");
        }
    }
}

#[test]
fn coherent_null_pair_values() {
    // ⟨dΛ·dB⁻_φ⟩ on normalized ε(f), ε(g) is (f|g)_j (φ|g)_j: two first-order factors
    let g = grid(8);
    let space = WickSpace::build(&g, 1, 1).unwrap();
    let (phi, psi, f, gg) = smooth_quartet(&g);
    let probe = ItoProbe::Coherent(f.clone(), gg.clone());
    for bin in 0..8 {
        let (e, _) = ito_table_probe(&space, Differential::Lambda, Differential::Annihilate, bin, &phi, &psi, &probe).unwrap();
        let fg = f.coeffs()[bin].conj() * gg.coeffs()[bin];
        let pg = phi.coeffs()[bin].conj() * gg.coeffs()[bin];
        assert!((e - fg * pg).norm() < 1e-12, "bin {bin}: {e} vs {}", fg * pg);

        let (e, _) = ito_table_probe(&space, Differential::Time, Differential::Time, bin, &phi, &psi, &probe).unwrap();
        assert!((e - C64::new(1.0 / 64.0, 0.0)).norm() < 1e-12);
    }
}
