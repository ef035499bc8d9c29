//! Acceptance suite: one test per criterion, each printing a pass/fail line.
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use std::time::Instant;

use steinpoly::basis::{basis_for, mv_hermite_basis};
use steinpoly::completeness::{build_kernel, build_kernel_with_exponent, injectivity_report};
use steinpoly::estimator::{
    basis_coefficients_of, evaluate_ghat, fit, ghat_grid, ghat_rmse, synthesize, Dataset, Obs,
    SynthSpec, ZLaw,
};
use steinpoly::family::{CondFamily, InstrumentPoint};
use steinpoly::integrate::{mv_weighted_inner, weighted_inner};
use steinpoly::moments::exact_base_expectation;
use steinpoly::multipoly::MultiPoly;
use steinpoly::poly::Poly;
use steinpoly::projection::{
    chebyshev_grid, fit_mu_polynomial, mv_project, project, projection_table, ProjectionTable,
};
use steinpoly::rational::{from_f64, rat, ratio};
use steinpoly::stein::{
    iterated_identity_residual, mv_stein_identity_residual, pearson_ord_shifted,
    stein_identity_residual, stein_markov_operator,
};

use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(criterion: usize, name: &str, pass: bool) {
    println!(
        "criterion {criterion:2}: {} — {name}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed: {name}");
}

fn six_families() -> Vec<CondFamily> {
    vec![
        CondFamily::normal_loc(1.0, (-2.0, 2.0)).unwrap(),
        CondFamily::gamma_shift(2.5, 2.0, -1.0, (0.0, 8.0)).unwrap(),
        CondFamily::beta_tilt(2.0, 3.0, (-1.5, 2.0)).unwrap(),
        CondFamily::poisson_tilt(1.0, (-0.9, 2.5)).unwrap(),
        CondFamily::neg_bin_tilt(2, 0.5, (-0.25, 0.25)).unwrap(),
        CondFamily::binomial_shift(10, 0.3, (0.0, 6.0)).unwrap(),
    ]
}

#[test]
fn criterion_01_eigenrelation_exactness() {
    let start = Instant::now();
    let mut pass = true;
    for fam in six_families() {
        let basis = basis_for(&fam, 10).unwrap();
        let op = stein_markov_operator(&fam).unwrap();
        for (j, q) in basis.polys.iter().enumerate() {
            let residual = &op.apply(q) - &q.scale(&basis.eigenvalues[j]);
            if !residual.is_zero() {
                eprintln!("{} j={j}: nonzero residual", fam.kind_name());
                pass = false;
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    if elapsed >= 10.0 {
        eprintln!("eigenrelation runtime {elapsed:.2}s exceeds 10s");
        pass = false;
    }
    report(
        1,
        "exact eigenrelation for six families, j <= 10, rational arithmetic",
        pass,
    );
}

#[test]
fn criterion_02_paper_eigenvalues() {
    let mut pass = true;
    // Normal, canonicalized: lambda_j = -j for every sigma^2.
    for &s2 in &[0.5, 1.0, 2.0] {
        let fam = CondFamily::normal_loc(s2, (-2.0, 2.0)).unwrap();
        let basis = basis_for(&fam, 10).unwrap();
        for j in 0..=10usize {
            pass &= basis.eigenvalues[j] == rat(-(j as i64));
        }
    }
    // Gamma: lambda_j = -delta j.
    for &delta in &[0.5, 1.0, 2.0] {
        let fam = CondFamily::gamma_shift(1.5, delta, 0.0, (0.0, 8.0)).unwrap();
        let basis = basis_for(&fam, 10).unwrap();
        for j in 0..=10usize {
            let expect = from_f64(delta).unwrap() * rat(-(j as i64));
            pass &= basis.eigenvalues[j] == expect;
        }
    }
    // Beta: lambda_j = -j (j + a + b - 1).
    for &(a, b) in &[(1.0, 1.0), (2.0, 3.0)] {
        let fam = CondFamily::beta_tilt(a, b, (-0.5, 0.5)).unwrap();
        let basis = basis_for(&fam, 10).unwrap();
        for j in 0..=10usize {
            let expect =
                rat(-(j as i64)) * (rat(j as i64) + from_f64(a + b).unwrap() - rat(1));
            pass &= basis.eigenvalues[j] == expect;
        }
    }
    report(2, "closed-form eigenvalues (normal, gamma, beta), exact", pass);
}

fn rel_ok(got: f64, want: f64, tol: f64) -> bool {
    (got - want).abs() <= tol * (1.0 + want.abs())
}

#[test]
fn criterion_03_projection_closed_forms() {
    let mut pass = true;

    let fam = CondFamily::normal_loc(1.0, (-2.0, 2.0)).unwrap();
    let basis = basis_for(&fam, 8).unwrap();
    for &zv in chebyshev_grid(-2.0, 2.0, 10).iter() {
        let p = project(&fam, &basis, &InstrumentPoint::scalar(zv)).unwrap();
        for (j, &pj) in p.iter().enumerate() {
            pass &= rel_ok(pj, zv.powi(j as i32), 1e-6);
        }
    }

    let fam = CondFamily::poisson_tilt(2.0, (-1.5, 4.5)).unwrap();
    let basis = basis_for(&fam, 8).unwrap();
    for &zv in chebyshev_grid(-1.4, 4.4, 10).iter() {
        let p = project(&fam, &basis, &InstrumentPoint::scalar(zv)).unwrap();
        for (j, &pj) in p.iter().enumerate() {
            pass &= rel_ok(pj, (zv / 2.0).powi(j as i32), 1e-6);
        }
    }

    // The gamma falling factorial holds for any (r, delta, g).
    for fam in [
        CondFamily::gamma_shift(1.0, 1.0, 0.0, (0.0, 8.0)).unwrap(),
        CondFamily::gamma_shift(2.5, 2.0, -1.0, (0.0, 8.0)).unwrap(),
    ] {
        let basis = basis_for(&fam, 8).unwrap();
        for &zv in chebyshev_grid(0.1, 7.9, 10).iter() {
            let p = project(&fam, &basis, &InstrumentPoint::scalar(zv)).unwrap();
            let mut ff = 1.0;
            for (j, &pj) in p.iter().enumerate() {
                if j > 0 {
                    ff *= zv - (j as f64 - 1.0);
                }
                pass &= rel_ok(pj, ff, 1e-6);
            }
        }
    }

    report(
        3,
        "projection closed forms: normal mu^j, Charlier (z/m0)^j, gamma falling factorial",
        pass,
    );
}

struct CertCase {
    fam: CondFamily,
    z_grid: Vec<f64>,
}

/// Certification windows chosen so the degree-(j-1) residual versus spread
/// separation is geometrically attainable for every j <= 8 (the projection
/// polynomials are near-monomials, so symmetric windows or root-cluster
/// windows are required).
fn certification_cases() -> Vec<CertCase> {
    let mut cases = Vec::new();
    cases.push(CertCase {
        fam: CondFamily::normal_loc(1.0, (-2.0, 2.0)).unwrap(),
        z_grid: chebyshev_grid(-2.0, 2.0, 36),
    });
    cases.push(CertCase {
        fam: CondFamily::gamma_shift(1.0, 1.0, 0.0, (0.0, 8.0)).unwrap(),
        z_grid: chebyshev_grid(0.0, 8.0, 36),
    });
    cases.push(CertCase {
        fam: CondFamily::beta_tilt(8.0, 8.0, (-7.800000001, 7.800000001)).unwrap(),
        z_grid: chebyshev_grid(-7.8, 7.8, 36),
    });
    cases.push(CertCase {
        fam: CondFamily::poisson_tilt(1.0, (-0.950000001, 0.950000001)).unwrap(),
        z_grid: chebyshev_grid(-0.95, 0.95, 36),
    });
    // The negative-binomial projections are monomials in the reparameterized
    // projection parameter; the grid is built by inverting that map at
    // Chebyshev points.
    let p = 0.5;
    cases.push(CertCase {
        fam: CondFamily::neg_bin_tilt(2, p, (-0.45, 0.45)).unwrap(),
        z_grid: chebyshev_grid(-0.8, 0.8, 36)
            .iter()
            .map(|&w| w * (1.0 - p) * p / (w * (1.0 - p) - 1.0))
            .collect(),
    });
    // Binomial trials shift: integer instrument; the window straddles the
    // root cluster of the rising-factorial projections.
    cases.push(CertCase {
        fam: CondFamily::binomial_shift(22, 0.3, (-21.0, 14.0)).unwrap(),
        z_grid: (-21..=14).map(|v| v as f64).collect(),
    });
    cases.push(CertCase {
        fam: CondFamily::pascal_shift(2.0, 0.5, (-0.5, 8.5)).unwrap(),
        z_grid: chebyshev_grid(0.0, 8.0, 36),
    });
    cases
}

fn scale_aware_coeff_match(c1: &[f64], c2: &[f64], half_width: f64, tol: f64) -> bool {
    let scale = |c: &[f64]| -> Vec<f64> {
        c.iter()
            .enumerate()
            .map(|(k, v)| v * half_width.powi(k as i32))
            .collect()
    };
    let (s1, s2) = (scale(c1), scale(c2));
    let cmax = s1.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
    s1.iter()
        .zip(&s2)
        .all(|(a, b)| (a - b).abs() <= tol * (1.0 + cmax))
}

#[test]
fn criterion_04_degree_certification() {
    let mut pass = true;
    for case in certification_cases() {
        let fam = &case.fam;
        let basis = basis_for(fam, 8).unwrap();
        let table = projection_table(fam, &basis, &case.z_grid).unwrap();
        for j in 0..=8usize {
            let fitj = fit_mu_polynomial(&table, j).unwrap();
            let pmax = table.values[j]
                .iter()
                .map(|v| v.abs())
                .fold(0.0f64, f64::max);
            if fitj.max_residual > 1e-6 * (1.0 + pmax) {
                eprintln!(
                    "{} j={j}: fit residual {:.3e} above 1e-6 scale",
                    fam.kind_name(),
                    fitj.max_residual
                );
                pass = false;
            }
            if j >= 1 && fitj.lower_max_residual < 1e-2 * fitj.spread {
                eprintln!(
                    "{} j={j}: lower residual {:.3e} below 1e-2 of spread {:.3e}",
                    fam.kind_name(),
                    fitj.lower_max_residual,
                    fitj.spread
                );
                pass = false;
            }
        }

        // Grid invariance: interleaved disjoint halves agree coefficient-wise.
        let evens: Vec<f64> = case.z_grid.iter().step_by(2).copied().collect();
        let odds: Vec<f64> = case.z_grid.iter().skip(1).step_by(2).copied().collect();
        let t1 = projection_table(fam, &basis, &evens).unwrap();
        let t2 = projection_table(fam, &basis, &odds).unwrap();
        let mu_lo = table.mu_grid.iter().copied().fold(f64::INFINITY, f64::min);
        let mu_hi = table
            .mu_grid
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        for j in 0..=8usize {
            let f1 = fit_mu_polynomial(&t1, j).unwrap();
            let f2 = fit_mu_polynomial(&t2, j).unwrap();
            if !scale_aware_coeff_match(&f1.coeffs, &f2.coeffs, (mu_hi - mu_lo) / 2.0, 1e-6) {
                eprintln!("{} j={j}: grid invariance violated", fam.kind_name());
                pass = false;
            }
        }
    }

    // The reparameterization for the negative-binomial tilt is necessary:
    // against the raw tilt parameter the projections are not polynomial.
    {
        let fam = CondFamily::neg_bin_tilt(2, 0.5, (-0.45, 0.45)).unwrap();
        let basis = basis_for(&fam, 4).unwrap();
        let grid = chebyshev_grid(-0.4, 0.4, 24);
        let table = projection_table(&fam, &basis, &grid).unwrap();
        let raw = ProjectionTable {
            mu_grid: grid.clone(), // raw tilt parameter mu(z) = z
            ..table
        };
        let f2 = fit_mu_polynomial(&raw, 2).unwrap();
        if f2.max_residual <= 1e-4 * (1.0 + f2.spread) {
            eprintln!(
                "raw-tilt fit unexpectedly tight: {:.3e}",
                f2.max_residual
            );
            pass = false;
        }
    }

    report(
        4,
        "degree-j certification with grid invariance for all seven univariate families",
        pass,
    );
}

fn random_poly(rng: &mut ChaCha8Rng, max_degree: usize) -> Poly {
    let deg = rng.gen_range(0..=max_degree);
    Poly::from_coeffs(
        (0..=deg)
            .map(|_| ratio(rng.gen_range(-4i64..=4), rng.gen_range(1i64..=3)))
            .collect(),
    )
}

#[test]
fn criterion_05_stein_identity() {
    let mut pass = true;
    for fam in [
        CondFamily::normal_loc(1.0, (-2.0, 2.0)).unwrap(),
        CondFamily::gamma_shift(2.5, 2.0, -1.0, (0.0, 8.0)).unwrap(),
        CondFamily::beta_tilt(2.0, 3.0, (-1.5, 2.0)).unwrap(),
        CondFamily::poisson_tilt(1.0, (-0.9, 2.5)).unwrap(),
        CondFamily::neg_bin_tilt(2, 0.5, (-0.25, 0.25)).unwrap(),
        CondFamily::binomial_shift(10, 0.3, (0.0, 6.0)).unwrap(),
        CondFamily::pascal_shift(2.0, 0.5, (0.0, 6.0)).unwrap(),
    ] {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let (lo, hi) = fam.z_domain();
        let integer = matches!(
            fam.kind(),
            steinpoly::family::FamilyKind::BinomialShift { .. }
        );
        for _ in 0..50 {
            let q = random_poly(&mut rng, 6);
            let mut zv = lo + (hi - lo) * rng.gen::<f64>();
            if integer {
                zv = zv.round();
            }
            let z = InstrumentPoint::scalar(zv);
            let deg = q.degree().unwrap_or(0);
            let eq = steinpoly::integrate::expectation(&fam, &z, &|x| q.eval_f64(x), deg).unwrap();
            let r = stein_identity_residual(&fam, &q, &z).unwrap();
            if r > 1e-8 * (1.0 + eq.abs()) {
                eprintln!("{} z={zv}: stein residual {r:.3e}", fam.kind_name());
                pass = false;
            }
            for k in 1..=4usize {
                let rk = iterated_identity_residual(&fam, &q, &z, k).unwrap();
                if rk > 1e-7 * (1.0 + eq.abs()) {
                    eprintln!("{} z={zv} k={k}: iterated residual {rk:.3e}", fam.kind_name());
                    pass = false;
                }
            }
        }
    }

    // Vector identity for the multivariate normal member.
    {
        let fam =
            CondFamily::mv_normal_loc(vec![vec![2.0, 1.0], vec![1.0, 2.0]], (-2.0, 2.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..50 {
            let mut q = MultiPoly::zero(2).unwrap();
            for _ in 0..4 {
                let e = vec![rng.gen_range(0..=2u32), rng.gen_range(0..=2u32)];
                let c = ratio(rng.gen_range(-3i64..=3), 1);
                let mut term = MultiPoly::one(2).unwrap().scale(&c);
                for (axis, &count) in e.iter().enumerate() {
                    for _ in 0..count {
                        term = term.mul(&MultiPoly::var(2, axis).unwrap());
                    }
                }
                q = q.add(&term);
            }
            let z = InstrumentPoint::vector(vec![
                -2.0 + 4.0 * rng.gen::<f64>(),
                -2.0 + 4.0 * rng.gen::<f64>(),
            ]);
            let r = mv_stein_identity_residual(&fam, &q, &z).unwrap();
            let eq = steinpoly::integrate::mv_expectation(
                &fam,
                &z,
                &|x| q.eval_f64(x),
                q.total_degree() as usize,
            )
            .unwrap();
            if r > 1e-8 * (1.0 + eq.abs()) {
                eprintln!("mv z={:?}: stein residual {r:.3e}", z.z2);
                pass = false;
            }
        }
    }

    report(
        5,
        "Stein identity (50 random pairs per family) and iterated identity k <= 4",
        pass,
    );
}

#[test]
fn criterion_06_orthogonality() {
    let mut pass = true;
    for fam in six_families() {
        let basis = basis_for(&fam, 10).unwrap();
        let mut norms = vec![0.0f64; 11];
        for (j, q) in basis.polys.iter().enumerate() {
            norms[j] = weighted_inner(&fam, &|x| q.eval_f64(x) * q.eval_f64(x), 2 * j)
                .unwrap()
                .sqrt();
        }
        for i in 0..=10usize {
            for j in (i + 1)..=10 {
                let qi = &basis.polys[i];
                let qj = &basis.polys[j];
                let inner =
                    weighted_inner(&fam, &|x| qi.eval_f64(x) * qj.eval_f64(x), i + j).unwrap();
                if inner.abs() > 1e-8 * norms[i] * norms[j] {
                    eprintln!("{} <Q_{i},Q_{j}> = {inner:.3e}", fam.kind_name());
                    pass = false;
                }
                // Independent exact oracle: the base-law moments are rational,
                // so the normalized inner product must vanish identically.
                let product = qi * qj;
                let exact = exact_base_expectation(&fam, &product).unwrap();
                if !exact.is_zero() {
                    eprintln!(
                        "{} exact <Q_{i},Q_{j}> = {} != 0",
                        fam.kind_name(),
                        exact
                    );
                    pass = false;
                }
            }
        }
    }

    // Multivariate normal Gram via tensor quadrature, two diagonal precisions.
    for m in [
        vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        vec![vec![2.0, 0.0], vec![0.0, 1.0]],
    ] {
        let fam = CondFamily::mv_normal_loc(m, (-2.0, 2.0)).unwrap();
        let indices: Vec<[u32; 2]> = (0..=2)
            .flat_map(|a| (0..=2).map(move |b| [a, b]))
            .collect();
        let polys: Vec<MultiPoly> = indices
            .iter()
            .map(|ij| mv_hermite_basis(&fam, ij).unwrap())
            .collect();
        let norms: Vec<f64> = polys
            .iter()
            .map(|p| {
                mv_weighted_inner(&fam, &|x| p.eval_f64(x) * p.eval_f64(x), 2 * p.total_degree() as usize)
                    .unwrap()
                    .sqrt()
            })
            .collect();
        for i in 0..polys.len() {
            for j in (i + 1)..polys.len() {
                let deg = (polys[i].total_degree() + polys[j].total_degree()) as usize;
                let inner =
                    mv_weighted_inner(&fam, &|x| polys[i].eval_f64(x) * polys[j].eval_f64(x), deg)
                        .unwrap();
                if inner.abs() > 1e-6 * norms[i] * norms[j] {
                    eprintln!("mv <H_{:?}, H_{:?}> = {inner:.3e}", indices[i], indices[j]);
                    pass = false;
                }
            }
        }
    }

    report(
        6,
        "Gram diagonality: six univariate families (with exact-moment oracle) and d = 2 tensor Hermite",
        pass,
    );
}

#[test]
fn criterion_07_mv_projection() {
    let mut pass = true;
    for m in [
        vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        vec![vec![2.0, 1.0], vec![1.0, 2.0]],
    ] {
        let fam = CondFamily::mv_normal_loc(m.clone(), (-2.0, 2.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        for _ in 0..5 {
            let z2 = vec![-2.0 + 4.0 * rng.gen::<f64>(), -2.0 + 4.0 * rng.gen::<f64>()];
            let z = InstrumentPoint::vector(z2.clone());
            let mz: Vec<f64> = m
                .iter()
                .map(|row| row.iter().zip(&z2).map(|(a, b)| a * b).sum())
                .collect();
            for total in 0..=4u32 {
                for j0 in 0..=total {
                    let j1 = total - j0;
                    let p = mv_project(&fam, &[j0, j1], &z).unwrap();
                    let want = mz[0].powi(j0 as i32) * mz[1].powi(j1 as i32);
                    if !rel_ok(p, want, 1e-6) {
                        eprintln!("M={m:?} j=({j0},{j1}) z={z2:?}: {p} vs {want}");
                        pass = false;
                    }
                }
            }
        }
    }
    report(7, "multivariate projection matches (M z2)^j, d = 2, |j| <= 4", pass);
}

#[test]
fn criterion_08_pearson_ord_shift() {
    let mut pass = true;

    let fam = CondFamily::binomial_shift(10, 0.3, (0.0, 3.0)).unwrap();
    let basis = basis_for(&fam, 6).unwrap();
    for row in
        pearson_ord_shifted(&fam, &basis.polys, &basis.eigenvalues, &[0.0, 1.0, 2.0, 3.0], 6)
            .unwrap()
    {
        if row.stein_char_residual > 1e-8 || row.eigen_identity_residual > 1e-8 {
            eprintln!(
                "binomial mu={} j={}: {:.3e} / {:.3e}",
                row.mu, row.j, row.stein_char_residual, row.eigen_identity_residual
            );
            pass = false;
        }
    }

    let fam = CondFamily::pascal_shift(2.0, 0.5, (0.0, 2.0)).unwrap();
    let basis = basis_for(&fam, 6).unwrap();
    for row in
        pearson_ord_shifted(&fam, &basis.polys, &basis.eigenvalues, &[0.0, 1.0, 2.0], 6).unwrap()
    {
        if row.stein_char_residual > 1e-8 || row.eigen_identity_residual > 1e-8 {
            eprintln!(
                "pascal mu={} j={}: {:.3e} / {:.3e}",
                row.mu, row.j, row.stein_char_residual, row.eigen_identity_residual
            );
            pass = false;
        }
    }

    report(
        8,
        "shifted Pearson/Ord identities for binomial (mu 0..3) and Pascal (mu 0..2), j <= 6",
        pass,
    );
}

/// Frozen reference value of the 21x21 Poisson certificate (double-double
/// Jacobi singular values of the column-normalized kernel, z in [0, 2]).
const POISSON_21_MIN_SV: f64 = 1.2269133738398824e-17;

#[test]
fn criterion_09_completeness_certificate() {
    let mut pass = true;
    let fam = CondFamily::poisson_tilt(1.0, (-0.9, 2.5)).unwrap();
    let grid: Vec<f64> = (0..21).map(|i| 2.0 * i as f64 / 20.0).collect();
    let kernel = build_kernel(&fam, &grid, 21).unwrap();
    let honest = injectivity_report(&kernel);
    if !(honest.min_sv > 0.0) {
        eprintln!("honest min_sv not strictly positive: {}", honest.min_sv);
        pass = false;
    }
    if (honest.min_sv - POISSON_21_MIN_SV).abs() > 1e-10 {
        eprintln!(
            "fixture drift: {} vs {}",
            honest.min_sv, POISSON_21_MIN_SV
        );
        pass = false;
    }

    let folded =
        build_kernel_with_exponent(&fam, &grid, 21, &|x| if x == 1 { 0 } else { x }).unwrap();
    let broken = injectivity_report(&folded);
    if broken.min_sv > 1e-12 * broken.max_sv {
        eprintln!(
            "folded kernel min_sv {:.3e} above 1e-12 * max_sv {:.3e}",
            broken.min_sv, broken.max_sv
        );
        pass = false;
    }

    report(
        9,
        "Poisson 21x21 certificate: strictly positive frozen min_sv; folded exponent collapses it",
        pass,
    );
}

#[test]
fn criterion_10_estimator_oracle() {
    let start = Instant::now();
    let mut pass = true;
    let fam = CondFamily::normal_loc(1.0, (-2.0, 2.0)).unwrap();
    let basis = basis_for(&fam, 2).unwrap();
    let g = Poly::from_coeffs(vec![rat(1), ratio(1, 2), ratio(-3, 10)]);
    let truth: Vec<f64> = basis_coefficients_of(&basis, &g).unwrap();

    // Noiseless in-span recovery: conditional-mean responses make the
    // regression equation exact.
    {
        let rows: Vec<Obs> = (0..40)
            .map(|i| {
                let zv = -2.0 + 4.0 * i as f64 / 39.0;
                let p = project(&fam, &basis, &InstrumentPoint::scalar(zv)).unwrap();
                let y: f64 = truth.iter().zip(&p).map(|(b, pj)| b * pj).sum();
                Obs {
                    y,
                    x: vec![0.0],
                    z1: Vec::new(),
                    z2: vec![zv],
                }
            })
            .collect();
        let f = fit(&Dataset { rows }, &fam, &basis, 2, 0.0).unwrap();
        for &x in &ghat_grid(&fam, 100) {
            if (evaluate_ghat(&f, x) - g.eval_f64(x)).abs() > 1e-6 {
                eprintln!("noiseless recovery off at x = {x}");
                pass = false;
            }
        }
    }

    // Monte Carlo: n = 5000, 21 seeds, median |beta_hat - beta| <= 0.05.
    {
        let mut errs: Vec<Vec<f64>> = vec![Vec::new(); 3];
        for seed in 0..21u64 {
            let data = synthesize(
                &fam,
                &SynthSpec {
                    g_true: g.clone(),
                    z_law: ZLaw::Uniform { lo: -2.0, hi: 2.0 },
                    noise_sd: 0.5,
                    n: 5000,
                    seed: 1000 + seed,
                    endogenous: 0.0,
                },
            )
            .unwrap();
            let f = fit(&data, &fam, &basis, 2, 0.0).unwrap();
            for (k, (b, t)) in f.beta.iter().zip(&truth).enumerate() {
                errs[k].push((b - t).abs());
            }
        }
        for (k, e) in errs.iter_mut().enumerate() {
            e.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let median = e[e.len() / 2];
            if median > 0.05 {
                eprintln!("coefficient {k}: median abs error {median:.4}");
                pass = false;
            }
        }
    }

    // Consistency trend: median RMSE of ghat non-increasing in n.
    {
        let grid = ghat_grid(&fam, 50);
        let mut medians = Vec::new();
        for &n in &[500usize, 2000, 8000] {
            let mut rmses: Vec<f64> = (0..21u64)
                .map(|seed| {
                    let data = synthesize(
                        &fam,
                        &SynthSpec {
                            g_true: g.clone(),
                            z_law: ZLaw::Uniform { lo: -2.0, hi: 2.0 },
                            noise_sd: 0.5,
                            n,
                            seed: 7000 + seed,
                            endogenous: 0.0,
                        },
                    )
                    .unwrap();
                    let f = fit(&data, &fam, &basis, 2, 0.0).unwrap();
                    ghat_rmse(&f, &g, &grid)
                })
                .collect();
            rmses.sort_by(|a, b| a.partial_cmp(b).unwrap());
            medians.push(rmses[rmses.len() / 2]);
        }
        if !(medians[0] >= medians[1] && medians[1] >= medians[2]) {
            eprintln!("median RMSE not non-increasing: {medians:?}");
            pass = false;
        }
    }

    let elapsed = start.elapsed().as_secs_f64();
    if elapsed >= 60.0 {
        eprintln!("estimator criterion runtime {elapsed:.2}s exceeds 60s");
        pass = false;
    }
    report(
        10,
        "estimator: exact in-span recovery, Monte Carlo coefficient recovery, RMSE trend",
        pass,
    );
}
