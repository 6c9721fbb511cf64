//! Matrix-form score and information of the bivariate Student-t copula.
//!
//! This is a deliberately literal evaluation with explicit duplication and
//! Kronecker-product algebra. It exists to cross-check the closed-form
//! scaled score in the copula kernel and is not used by the filter.

use super::{copula_quantile, rho_from_tilde};
use crate::error::{Error, Result};

type M2 = [[f64; 2]; 2];
type M4 = [[f64; 4]; 4];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOutput {
    /// ∂log c/∂ρ
    pub score: f64,
    /// E[(∂log c/∂ρ)²]
    pub information: f64,
    /// (∂ρ̃/∂ρ) · I⁻¹ · ∇, the scaled score for the transformed correlation.
    pub scaled_score: f64,
}

const G: M4 = [
    [3.0, 0.0, 0.0, 1.0],
    [0.0, 1.0, 1.0, 0.0],
    [0.0, 1.0, 1.0, 0.0],
    [1.0, 0.0, 0.0, 3.0],
];

/// Duplication matrix for 2×2 symmetric matrices: D vech(A) = vec(A).
const DUP: [[f64; 3]; 4] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

fn kron(a: &M2, b: &M2) -> M4 {
    let mut out = [[0.0; 4]; 4];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    out[2 * i + k][2 * j + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

fn matvec4(m: &M4, v: &[f64; 4]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (i, row) in m.iter().enumerate() {
        out[i] = row.iter().zip(v).map(|(a, b)| a * b).sum();
    }
    out
}

fn dot4(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Column-major vec of a 2×2 matrix.
fn vec2(m: &M2) -> [f64; 4] {
    [m[0][0], m[1][0], m[0][1], m[1][1]]
}

fn inverse2(m: &M2) -> Result<M2> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if !(det.abs() > 1e-300) || !det.is_finite() {
        return Err(Error::Degenerate("singular correlation matrix".into()));
    }
    Ok([
        [m[1][1] / det, -m[0][1] / det],
        [-m[1][0] / det, m[0][0] / det],
    ])
}

/// Lower Cholesky factor of a symmetric positive definite 2×2 matrix.
fn cholesky2(m: &M2) -> Result<M2> {
    let l11 = m[0][0].sqrt();
    let l21 = m[1][0] / l11;
    let d = m[1][1] - l21 * l21;
    if !(d > 0.0) {
        return Err(Error::Degenerate("matrix not positive definite".into()));
    }
    Ok([[l11, 0.0], [l21, d.sqrt()]])
}

fn transpose2(m: &M2) -> M2 {
    [[m[0][0], m[1][0]], [m[0][1], m[1][1]]]
}

fn transpose4(m: &M4) -> M4 {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = m[j][i];
        }
    }
    out
}

fn matmul4(a: &M4, b: &M4) -> M4 {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

/// Score and information of the copula correlation by explicit matrix algebra.
pub fn copula_score_oracle(u: (f64, f64), rho_tilde: f64, nu: f64) -> Result<OracleOutput> {
    if !(nu > 2.0) {
        return Err(Error::Domain(format!("nu={nu} must exceed 2")));
    }
    let rho = rho_from_tilde(rho_tilde);
    if !(rho.abs() < 1.0 - 1e-15) {
        return Err(Error::Degenerate(format!("|rho| -> 1 at rho_tilde={rho_tilde}")));
    }
    let x = [copula_quantile(u.0, nu), copula_quantile(u.1, nu)];
    let sigma: M2 = [[1.0, rho], [rho, 1.0]];
    let sigma_inv = inverse2(&sigma)?;
    // Σ⁻¹ = J'J with J = L' for the lower Cholesky factor L of Σ⁻¹.
    let j = transpose2(&cholesky2(&sigma_inv)?);
    let j_kron = kron(&j, &j);
    let sigma_inv_kron = kron(&sigma_inv, &sigma_inv);

    // Ψ = ∂vech(Σ)/∂ρ, then DΨ.
    let psi = [0.0, 1.0, 0.0];
    let mut d_psi = [0.0; 4];
    for (i, row) in DUP.iter().enumerate() {
        d_psi[i] = row.iter().zip(&psi).map(|(a, b)| a * b).sum();
    }

    let q: f64 = {
        let sx = [
            sigma_inv[0][0] * x[0] + sigma_inv[0][1] * x[1],
            sigma_inv[1][0] * x[0] + sigma_inv[1][1] * x[1],
        ];
        x[0] * sx[0] + x[1] * sx[1]
    };
    let w = (nu + 2.0) / (nu - 2.0 + q);
    let x_kron = [x[0] * x[0], x[1] * x[0], x[0] * x[1], x[1] * x[1]];
    let vec_sigma = vec2(&sigma);
    let mut inner = [0.0; 4];
    for i in 0..4 {
        inner[i] = w * x_kron[i] - vec_sigma[i];
    }
    let score = 0.5 * dot4(&d_psi, &matvec4(&sigma_inv_kron, &inner));

    let g = (nu + 2.0) / (nu + 4.0);
    let vec_i = vec2(&[[1.0, 0.0], [0.0, 1.0]]);
    let mut core = [[0.0; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            core[a][b] = g * G[a][b] - vec_i[a] * vec_i[b];
        }
    }
    let sandwich = matmul4(&transpose4(&j_kron), &matmul4(&core, &j_kron));
    let information = 0.25 * dot4(&d_psi, &matvec4(&sandwich, &d_psi));
    if !(information > 0.0) {
        return Err(Error::Degenerate(format!("information {information} not positive")));
    }
    let dtilde_drho = 2.0 / (1.0 - rho * rho);
    Ok(OracleOutput {
        score,
        information,
        scaled_score: dtilde_drho * score / information,
    })
}
