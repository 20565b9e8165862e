//! 4×4 homogeneous transforms in row-vector convention.
//!
//! A point is the row `[x y z 1]` and maps to `[x y z 1]·M`, so translation
//! lives in the bottom row and `compose([A, B])` applies `A` first.

use serde::{Deserialize, Serialize};

use super::RegistrationError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    m: [[f64; 4]; 4],
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        let mut m = [[0.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        RigidTransform { m }
    }

    /// Accepts any affine matrix whose last column is `[0 0 0 1]ᵀ`.
    pub fn from_rows(m: [[f64; 4]; 4]) -> Result<Self, RegistrationError> {
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(RegistrationError::NotAffine(
                "entries must be finite".into(),
            ));
        }
        if m[0][3] != 0.0 || m[1][3] != 0.0 || m[2][3] != 0.0 || m[3][3] != 1.0 {
            return Err(RegistrationError::NotAffine(
                "last column must be [0 0 0 1]".into(),
            ));
        }
        Ok(RigidTransform { m })
    }

    pub fn rows(&self) -> &[[f64; 4]; 4] {
        &self.m
    }

    /// Scaling on the diagonal, translation in the bottom row.
    pub fn translation_scaling(s: [f64; 3], t: [f64; 3]) -> Result<Self, RegistrationError> {
        if s.iter().any(|&v| v == 0.0 || !v.is_finite()) || t.iter().any(|v| !v.is_finite()) {
            return Err(RegistrationError::Singular);
        }
        let mut out = Self::identity();
        for i in 0..3 {
            out.m[i][i] = s[i];
            out.m[3][i] = t[i];
        }
        Ok(out)
    }

    pub fn translation(t: [f64; 3]) -> Self {
        Self::translation_scaling([1.0; 3], t).expect("unit scale is never singular")
    }

    /// Right-handed rotation by `theta` radians. With row vectors the 3×3 block
    /// is the transpose of the familiar column-vector matrix.
    pub fn rotation(axis: Axis, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        let mut out = Self::identity();
        let (a, b) = match axis {
            Axis::X => (1, 2),
            Axis::Y => (2, 0),
            Axis::Z => (0, 1),
        };
        out.m[a][a] = c;
        out.m[a][b] = s;
        out.m[b][a] = -s;
        out.m[b][b] = c;
        out
    }

    /// `self` first, then `next`.
    pub fn then(&self, next: &RigidTransform) -> RigidTransform {
        let mut m = [[0.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..4).map(|k| self.m[i][k] * next.m[k][j]).sum();
            }
        }
        RigidTransform { m }
    }

    pub fn compose(list: &[RigidTransform]) -> Result<RigidTransform, RegistrationError> {
        let (first, rest) = list
            .split_first()
            .ok_or(RegistrationError::EmptyComposition)?;
        Ok(rest.iter().fold(*first, |acc, t| acc.then(t)))
    }

    pub fn linear(&self) -> [[f64; 3]; 3] {
        let mut a = [[0.0; 3]; 3];
        for (i, row) in a.iter_mut().enumerate() {
            row.copy_from_slice(&self.m[i][..3]);
        }
        a
    }

    pub fn offset(&self) -> [f64; 3] {
        [self.m[3][0], self.m[3][1], self.m[3][2]]
    }

    pub fn determinant(&self) -> f64 {
        det3(&self.linear())
    }

    /// Exact affine inverse: `A⁻¹` in the block, `−t·A⁻¹` in the bottom row.
    pub fn inverse(&self) -> Result<RigidTransform, RegistrationError> {
        let a = self.linear();
        let det = det3(&a);
        if det == 0.0 || !det.is_finite() {
            return Err(RegistrationError::Singular);
        }
        let cof = |r0: usize, r1: usize, c0: usize, c1: usize| {
            a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0]
        };
        let inv = [
            [
                cof(1, 2, 1, 2) / det,
                -cof(0, 2, 1, 2) / det,
                cof(0, 1, 1, 2) / det,
            ],
            [
                -cof(1, 2, 0, 2) / det,
                cof(0, 2, 0, 2) / det,
                -cof(0, 1, 0, 2) / det,
            ],
            [
                cof(1, 2, 0, 1) / det,
                -cof(0, 2, 0, 1) / det,
                cof(0, 1, 0, 1) / det,
            ],
        ];
        let t = self.offset();
        let mut out = Self::identity();
        for (row, inv_row) in out.m.iter_mut().zip(&inv) {
            row[..3].copy_from_slice(inv_row);
        }
        for (j, o) in out.m[3][..3].iter_mut().enumerate() {
            *o = -(0..3).map(|k| t[k] * inv[k][j]).sum::<f64>();
        }
        Ok(out)
    }

    /// Exact floating-point application to a point.
    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (j, o) in out.iter_mut().enumerate() {
            *o = p[0] * self.m[0][j] + p[1] * self.m[1][j] + p[2] * self.m[2][j] + self.m[3][j];
        }
        out
    }

    /// Parses 16 whitespace-separated numbers in row-major order.
    pub fn parse(text: &str) -> Result<RigidTransform, RegistrationError> {
        let vals = text
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| RegistrationError::Parse(format!("`{tok}` is not a number")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if vals.len() != 16 {
            return Err(RegistrationError::Parse(format!(
                "expected 16 numbers, found {}",
                vals.len()
            )));
        }
        let mut m = [[0.0; 4]; 4];
        for (i, v) in vals.into_iter().enumerate() {
            m[i / 4][i % 4] = v;
        }
        Self::from_rows(m)
    }

    /// Four lines of four numbers; parses back to the same matrix.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for row in &self.m {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }
}

fn det3(a: &[[f64; 3]; 3]) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}
