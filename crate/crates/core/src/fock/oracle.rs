//! Brute-force reference built on the full tensor space `⊕_{k≤n} h^{⊗k}`.
//!
//! Operators are written down factor by factor (`A⁺` prepends, `A⁻` contracts
//! the first factor, `Γ(U)` acts on every factor) and then compressed to the
//! symmetric or antisymmetric subspace. The occupation basis is embedded by
//! `|n⟩ = √(k!/∏n_m!)·Π₊(e_{s₁}⊗…)` and `|S⟩ = √(k!)·Π₋(e_{s₁}⊗…)`, and the
//! compressed operators are compared with the occupation-basis ones.

use itertools::Itertools;
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::basis::{FockBasis, Statistics};
use super::fields::{field_from_coeffs, FieldKind};
use super::second_quant::{diff_second_quantize, second_quantize};
use crate::error::{Error, Result};
use crate::linalg::{max_abs_diff, random_hermitian, random_unitary, random_vector};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Largest mode count and grade accepted by the oracle.
pub const ORACLE_MAX: usize = 3;

/// Max absolute entry deviations between the tensor and occupation routes.
#[derive(Clone, Debug, Default, Serialize)]
pub struct OracleReport {
    pub modes: usize,
    pub max_grade: usize,
    pub embedding: f64,
    pub bose_creation: f64,
    pub bose_annihilation: f64,
    pub fermi_creation: f64,
    pub fermi_annihilation: f64,
    pub bose_second_quantization: f64,
    pub fermi_second_quantization: f64,
    pub bose_differential: f64,
    pub fermi_differential: f64,
    pub swap_bose: f64,
    pub swap_fermi: f64,
    pub fermi_car: f64,
    /// Distance between the `1/√k` annihilator and the adjoint of `A⁺`
    /// (informational; nonzero whenever a grade ≥ 2 is present).
    pub literal_annihilation_gap: f64,
}

impl OracleReport {
    /// Largest of the comparison defects (excludes the informational gap).
    pub fn max_defect(&self) -> f64 {
        [
            self.embedding,
            self.bose_creation,
            self.bose_annihilation,
            self.fermi_creation,
            self.fermi_annihilation,
            self.bose_second_quantization,
            self.fermi_second_quantization,
            self.bose_differential,
            self.fermi_differential,
            self.swap_bose,
            self.swap_fermi,
            self.fermi_car,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

struct TensorSpace {
    d: usize,
    n_max: usize,
    offsets: Vec<usize>,
}

impl TensorSpace {
    fn new(d: usize, n_max: usize) -> Self {
        let mut offsets = vec![0];
        for k in 0..=n_max {
            offsets.push(offsets[k] + d.pow(k as u32));
        }
        Self { d, n_max, offsets }
    }

    fn dim(&self) -> usize {
        self.offsets[self.n_max + 1]
    }

    fn index(&self, word: &[usize]) -> usize {
        self.offsets[word.len()] + word.iter().fold(0, |acc, &m| acc * self.d + m)
    }

    fn words(&self, k: usize) -> Vec<Vec<usize>> {
        if k == 0 {
            return vec![Vec::new()];
        }
        (0..k).map(|_| 0..self.d).multi_cartesian_product().collect()
    }

    fn zeros(&self) -> DMatrix<C64> {
        DMatrix::from_element(self.dim(), self.dim(), ZERO)
    }

    /// `A⁺(h)`: `f₁⊗…⊗f_k ↦ √(k+1)·h⊗f₁⊗…⊗f_k`, zero on the top grade.
    fn creation(&self, h: &[C64]) -> DMatrix<C64> {
        let mut a = self.zeros();
        for k in 0..self.n_max {
            let s = ((k + 1) as f64).sqrt();
            for w in self.words(k) {
                let col = self.index(&w);
                for (m, &hm) in h.iter().enumerate() {
                    let mut up = vec![m];
                    up.extend_from_slice(&w);
                    a[(self.index(&up), col)] += hm * s;
                }
            }
        }
        a
    }

    /// `f₁⊗…⊗f_k ↦ c_k·⟨h|f₁⟩ f₂⊗…⊗f_k` with prefactor `c_k`.
    fn contraction(&self, h: &[C64], prefactor: impl Fn(usize) -> f64) -> DMatrix<C64> {
        let mut a = self.zeros();
        for k in 1..=self.n_max {
            for w in self.words(k) {
                let col = self.index(&w);
                a[(self.index(&w[1..]), col)] += h[w[0]].conj() * prefactor(k);
            }
        }
        a
    }

    fn second_quantization(&self, u: &DMatrix<C64>) -> DMatrix<C64> {
        let mut g = self.zeros();
        for k in 0..=self.n_max {
            for w in self.words(k) {
                for v in &self.words(k) {
                    let amp: C64 = w.iter().zip(v).map(|(&r, &c)| u[(r, c)]).product();
                    g[(self.index(&w), self.index(v))] = amp;
                }
            }
        }
        g
    }

    fn differential(&self, h: &DMatrix<C64>) -> DMatrix<C64> {
        let mut g = self.zeros();
        for k in 1..=self.n_max {
            for v in self.words(k) {
                let col = self.index(&v);
                for j in 0..k {
                    for p in 0..self.d {
                        let mut w = v.clone();
                        w[j] = p;
                        g[(self.index(&w), col)] += h[(p, v[j])];
                    }
                }
            }
        }
        g
    }

    /// `Π±` on every grade: the (signed) average over factor permutations.
    fn symmetrizer(&self, stat: Statistics) -> DMatrix<C64> {
        let mut p = self.zeros();
        for k in 0..=self.n_max {
            let perms: Vec<Vec<usize>> = (0..k).permutations(k).collect();
            let weight = 1.0 / perms.len() as f64;
            for w in self.words(k) {
                let col = self.index(&w);
                for perm in &perms {
                    let permuted: Vec<usize> = perm.iter().map(|&i| w[i]).collect();
                    let sign = match stat {
                        Statistics::Bose => 1.0,
                        Statistics::Fermi => permutation_sign(perm),
                    };
                    p[(self.index(&permuted), col)] += C64::new(sign * weight, 0.0);
                }
            }
        }
        p
    }

    /// Columns are the occupation basis states embedded in the tensor space.
    fn embedding(&self, basis: &FockBasis, sym: &DMatrix<C64>) -> DMatrix<C64> {
        let mut v = DMatrix::from_element(self.dim(), basis.dim(), ZERO);
        for i in 0..basis.dim() {
            let list = basis.mode_list(i);
            let k = list.len();
            let kf: f64 = (1..=k).map(|x| x as f64).product();
            let norm = match basis.statistics() {
                Statistics::Bose => {
                    let occ: f64 =
                        basis.label(i).iter().map(|&n| (1..=n as u64).product::<u64>() as f64).product();
                    (kf / occ).sqrt()
                }
                Statistics::Fermi => kf.sqrt(),
            };
            let col = sym.column(self.index(&list)) * C64::new(norm, 0.0);
            v.set_column(i, &col);
        }
        v
    }
}

fn permutation_sign(perm: &[usize]) -> f64 {
    let inversions = perm.iter().tuple_combinations().filter(|(a, b)| a > b).count();
    if inversions % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn compressed(v: &DMatrix<C64>, p: &DMatrix<C64>, a: &DMatrix<C64>) -> DMatrix<C64> {
    v.adjoint() * p * a * p * v
}

/// Compares the occupation-basis operators with the tensor construction at
/// `d` modes and grades up to `n_max`, using seeded random `f`, `g`, `U`, `H`.
pub fn tensor_oracle_compare(d: usize, n_max: usize, seed: u64) -> Result<OracleReport> {
    if d == 0 || d > ORACLE_MAX || n_max > ORACLE_MAX {
        return Err(Error::SizeOverflow { size: d.max(n_max), cap: ORACLE_MAX });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = random_vector(&mut rng, d);
    let g = random_vector(&mut rng, d);
    let u = random_unitary(&mut rng, d);
    let h = random_hermitian(&mut rng, d);
    let swap = DMatrix::from_fn(d, d, |r, c| if r + c == d - 1 { C64::new(1.0, 0.0) } else { ZERO });

    let t = TensorSpace::new(d, n_max);
    let a_plus_f = t.creation(&f);
    let a_minus_f = a_plus_f.adjoint();
    let a_plus_g = t.creation(&g);
    let literal = t.contraction(&f, |k| 1.0 / (k as f64).sqrt());
    let gamma_u = t.second_quantization(&u);
    let gamma_swap = t.second_quantization(&swap);
    let diff_h = t.differential(&h);

    let mut report = OracleReport {
        modes: d,
        max_grade: n_max,
        literal_annihilation_gap: max_abs_diff(&literal, &a_minus_f),
        ..Default::default()
    };
    // the exact adjoint is the √k contraction
    report.embedding = max_abs_diff(&t.contraction(&f, |k| (k as f64).sqrt()), &a_minus_f);

    for stat in [Statistics::Bose, Statistics::Fermi] {
        let basis = FockBasis::new(stat, d, n_max)?;
        let p = t.symmetrizer(stat);
        let v = t.embedding(&basis, &p);
        let id = DMatrix::<C64>::identity(basis.dim(), basis.dim());
        report.embedding = report.embedding.max(max_abs_diff(&(v.adjoint() * &v), &id));
        report.embedding = report.embedding.max(max_abs_diff(&(&p * &v), &v));

        let occ = |kind, phi: &[C64]| field_from_coeffs(&basis, kind, phi).map(|o| o.to_dense());
        let creation = max_abs_diff(&compressed(&v, &p, &a_plus_f), &occ(FieldKind::Creation, &f)?);
        let annihilation = max_abs_diff(&compressed(&v, &p, &a_minus_f), &occ(FieldKind::Annihilation, &f)?);
        let sq = max_abs_diff(&compressed(&v, &p, &gamma_u), &second_quantize(&basis, &u)?.to_dense());
        let diff = max_abs_diff(&compressed(&v, &p, &diff_h), &diff_second_quantize(&basis, &h)?.to_dense());
        let sw = max_abs_diff(&compressed(&v, &p, &gamma_swap), &second_quantize(&basis, &swap)?.to_dense());
        match stat {
            Statistics::Bose => {
                report.bose_creation = creation;
                report.bose_annihilation = annihilation;
                report.bose_second_quantization = sq;
                report.bose_differential = diff;
                report.swap_bose = sw;
            }
            Statistics::Fermi => {
                report.fermi_creation = creation;
                report.fermi_annihilation = annihilation;
                report.fermi_second_quantization = sq;
                report.fermi_differential = diff;
                report.swap_fermi = sw;

                // {F⁻(f), F⁺(g)} = ⟨f|g⟩ through the tensor route, on grades
                // the truncation does not touch
                let fm = compressed(&v, &p, &a_minus_f);
                let fp = compressed(&v, &p, &a_plus_g);
                let anti = &fm * &fp + &fp * &fm;
                let fg: C64 = f.iter().zip(&g).map(|(a, b)| a.conj() * b).sum();
                let keep = match n_max.checked_sub(1) {
                    _ if n_max >= d => basis.dim(),
                    Some(k) => basis.up_to_grade(k).len(),
                    None => 0,
                };
                let target = DMatrix::<C64>::identity(keep, keep) * fg;
                report.fermi_car = max_abs_diff(&anti.view((0, 0), (keep, keep)).into_owned(), &target);
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_spaces_agree() {
        for d in 1..=3 {
            for n in 0..=3 {
                let r = tensor_oracle_compare(d, n, 17).unwrap();
                assert!(r.max_defect() < 1e-12, "d={d} n={n}: {r:?}");
            }
        }
    }

    #[test]
    fn literal_prefactor_differs_from_adjoint() {
        let r = tensor_oracle_compare(2, 2, 1).unwrap();
        assert!(r.literal_annihilation_gap > 0.1);
    }

    #[test]
    fn rejects_large_inputs() {
        assert!(matches!(tensor_oracle_compare(4, 2, 0), Err(Error::SizeOverflow { .. })));
        assert!(matches!(tensor_oracle_compare(2, 4, 0), Err(Error::SizeOverflow { .. })));
    }

    #[test]
    fn two_mode_fermi_examples() {
        // F⁺(e₂)|{1}⟩ = −|{1,2}⟩ and ⟨{1,2}|Γ₋(U)|{1,2}⟩ = det U, both read off
        // the tensor side directly
        let t = TensorSpace::new(2, 2);
        let basis = FockBasis::new(Statistics::Fermi, 2, 2).unwrap();
        let p = t.symmetrizer(Statistics::Fermi);
        let v = t.embedding(&basis, &p);
        let e2 = [ZERO, C64::new(1.0, 0.0)];
        let fp = compressed(&v, &p, &t.creation(&e2));
        assert!((fp[(3, 1)] + C64::new(1.0, 0.0)).norm() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = random_unitary(&mut rng, 2);
        let g = compressed(&v, &p, &t.second_quantization(&u));
        assert!((g[(3, 3)] - u.determinant()).norm() < 1e-14);
    }
}
