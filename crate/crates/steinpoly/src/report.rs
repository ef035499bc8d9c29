//! Deterministic artifact serialization: floats carry 17 significant digits
//! so every emitted number round-trips to the exact f64, byte for byte.

use crate::basis::EigenBasis;
use crate::completeness::{InjectivityReport, Verdict};
use crate::estimator::FitResult;
use crate::projection::ProjectionTable;

/// 17-significant-digit scientific form; round-trip exact for f64.
pub fn fmt_g17(x: f64) -> String {
    format!("{x:.16e}")
}

fn json_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Basis dump: [{"j": 0, "lambda": "0", "coeffs": ["1"]}, ...].
pub fn basis_json(basis: &EigenBasis) -> String {
    let mut out = String::from("[");
    for (j, (q, lambda)) in basis.polys.iter().zip(&basis.eigenvalues).enumerate() {
        if j > 0 {
            out.push(',');
        }
        out.push_str(&format!("\n  {{\"j\": {j}, \"lambda\": \"{lambda}\", \"coeffs\": ["));
        for (k, c) in q.coeffs().iter().enumerate() {
            if k > 0 {
                out.push_str(", ");
            }
            out.push_str(&format!("\"{c}\""));
        }
        out.push_str("]}");
    }
    out.push_str("\n]\n");
    out
}

/// Verification detail rows as a JSON array of {family, check, j, z, residual}.
#[derive(Debug, Clone)]
pub struct ResidualEntry {
    pub check: String,
    pub j: i64,
    pub z: f64,
    pub residual: f64,
}

pub fn residual_report_json(family: &str, entries: &[ResidualEntry]) -> String {
    let mut out = String::from("[");
    for (i, e) in entries.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&format!(
            "\n  {{\"family\": \"{}\", \"check\": \"{}\", \"j\": {}, \"z\": {}, \"residual\": {}}}",
            json_escape(family),
            json_escape(&e.check),
            e.j,
            fmt_g17(e.z),
            fmt_g17(e.residual)
        ));
    }
    out.push_str("\n]\n");
    out
}

/// CSV table with header "j,z,mu,P".
pub fn projection_csv(table: &ProjectionTable) -> String {
    let mut out = String::from("j,z,mu,P\n");
    for j in 0..=table.j_max {
        for (col, &z) in table.z_grid.iter().enumerate() {
            out.push_str(&format!(
                "{j},{},{},{}\n",
                fmt_g17(z),
                fmt_g17(table.mu_grid[col]),
                fmt_g17(table.values[j][col])
            ));
        }
    }
    out
}

/// Fitted mu-polynomial coefficients as JSON.
pub fn mu_fit_json(fits: &[(usize, Vec<f64>, f64)]) -> String {
    let mut out = String::from("[");
    for (i, (j, coeffs, residual)) in fits.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&format!("\n  {{\"j\": {j}, \"coeffs\": ["));
        for (k, c) in coeffs.iter().enumerate() {
            if k > 0 {
                out.push_str(", ");
            }
            out.push_str(&fmt_g17(*c));
        }
        out.push_str(&format!("], \"max_residual\": {}}}", fmt_g17(*residual)));
    }
    out.push_str("\n]\n");
    out
}

pub fn injectivity_json(report: &InjectivityReport) -> String {
    let verdict = match report.verdict {
        Verdict::NumericallyInjective => "numerically injective",
        Verdict::NumericallyNonInjective => "numerically non-injective",
    };
    format!(
        "{{\"family\": \"{}\", \"n\": {}, \"min_sv\": {}, \"max_sv\": {}, \"verdict\": \"{}\", \"note\": \"{}\"}}\n",
        json_escape(&report.family),
        report.n,
        fmt_g17(report.min_sv),
        fmt_g17(report.max_sv),
        verdict,
        json_escape(report.note)
    )
}

pub fn fit_json(fit: &FitResult) -> String {
    let mut out = String::from("{\"beta\": [");
    for (i, b) in fit.beta.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&fmt_g17(*b));
    }
    out.push_str(&format!(
        "], \"J\": {}, \"ridge\": {}, \"diagnostics\": {{\"condition\": {}, \"residual_mean\": {}, \"residual_variance\": {}}}}}\n",
        fit.j_max,
        fmt_g17(fit.ridge),
        fmt_g17(fit.condition),
        fmt_g17(fit.residual_mean),
        fmt_g17(fit.residual_variance)
    ));
    out
}

/// CSV of the fitted structural function over an x grid.
pub fn ghat_csv(fit: &FitResult, grid: &[f64]) -> String {
    let mut out = String::from("x,ghat\n");
    for &x in grid {
        out.push_str(&format!(
            "{},{}\n",
            fmt_g17(x),
            fmt_g17(crate::estimator::evaluate_ghat(fit, x))
        ));
    }
    out
}

/// Dataset CSV in the load_csv schema.
pub fn dataset_csv(data: &crate::estimator::Dataset) -> String {
    let mut out = String::from("y,x,z2\n");
    for row in &data.rows {
        out.push_str(&format!(
            "{},{},{}\n",
            fmt_g17(row.y),
            fmt_g17(row.x[0]),
            fmt_g17(row.z2[0])
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g17_round_trips() {
        for &x in &[0.1, std::f64::consts::PI, 1.0 / 3.0, -2.5e-13, 6.02e23] {
            let s = fmt_g17(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back, x, "{s}");
        }
    }

    #[test]
    fn basis_json_shape() {
        let fam = crate::family::CondFamily::poisson_tilt(1.0, (-0.9, 2.0)).unwrap();
        let basis = crate::basis::discrete_basis(&fam, 2).unwrap();
        let s = basis_json(&basis);
        assert!(s.contains("\"j\": 2"));
        assert!(s.contains("\"lambda\": \"-2\""));
        // Charlier C_2 = x^2 - 3x + 1.
        assert!(s.contains("[\"1\", \"-3\", \"1\"]"));
    }
}
