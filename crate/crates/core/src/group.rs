//! Exact algebra of the supported Carnot groups in exponential coordinates.
//!
//! A group element is a real vector laid out layer by layer,
//! `(p⁽¹⁾, p⁽²⁾[, p⁽³⁾])`. The identity is `0` and `p⁻¹ = −p`. Step-2 groups
//! are described by a skew-symmetric bilinear form `B: ℝ^{n₁} × ℝ^{n₁} → ℝ^{n₂}`
//! so that `p·q = p + q + (0, B(p⁽¹⁾, q⁽¹⁾))`. The Engel group carries its own
//! closed-form step-3 law.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Names accepted by [`GroupSpec::builtin`].
pub const BUILTIN_GROUPS: [&str; 4] = ["heisenberg", "rxh", "engel", "abelian3"];

/// Multiplication law of a group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Law {
    /// Step 2: `B(u,v)_k = uᵀ B_k v`, one `n₁ × n₁` matrix per second-layer coordinate.
    Bilinear { matrices: Vec<Vec<Vec<f64>>> },
    /// The Engel group `ℝ² × ℝ × ℝ` with its explicit step-3 law.
    Engel,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct GroupSpecDoc {
    name: String,
    step: usize,
    layer_dims: Vec<usize>,
    law: Law,
    #[serde(default)]
    schema_version: Option<u32>,
}

/// A concrete Carnot group. Immutable after construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GroupSpecDoc", into = "GroupSpecDoc")]
pub struct GroupSpec {
    name: String,
    step: usize,
    layer_dims: Vec<usize>,
    law: Law,
    offsets: Vec<usize>,
    c0: Option<f64>,
}

impl TryFrom<GroupSpecDoc> for GroupSpec {
    type Error = Error;

    fn try_from(doc: GroupSpecDoc) -> Result<Self> {
        GroupSpec::new(doc.name, doc.step, doc.layer_dims, doc.law)
    }
}

impl From<GroupSpec> for GroupSpecDoc {
    fn from(spec: GroupSpec) -> Self {
        GroupSpecDoc {
            name: spec.name,
            step: spec.step,
            layer_dims: spec.layer_dims,
            law: spec.law,
            schema_version: Some(1),
        }
    }
}

/// A group element in exponential coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Vec<f64>);

/// An element of the horizontal plane through the identity, `ℝ^{n₁}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HorizontalVec(pub Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn zeros(n: usize) -> Self {
        Point(vec![0.0; n])
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Euclidean norm of the coordinate vector.
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Euclidean distance between coordinate vectors.
    pub fn euclidean_distance(&self, other: &Point) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

impl HorizontalVec {
    pub fn new(h: Vec<f64>) -> Self {
        HorizontalVec(h)
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, s: f64) -> HorizontalVec {
        HorizontalVec(self.0.iter().map(|v| v * s).collect())
    }

    /// Unit vector along coordinate axis `i` of an `m`-dimensional first layer.
    pub fn axis(m: usize, i: usize) -> HorizontalVec {
        let mut h = vec![0.0; m];
        h[i] = 1.0;
        HorizontalVec(h)
    }
}

impl GroupSpec {
    /// Builds and validates a spec.
    pub fn new(name: impl Into<String>, step: usize, layer_dims: Vec<usize>, law: Law) -> Result<Self> {
        let name = name.into();
        if name.is_empty() {
            return Err(Error::InvalidSpec("empty name".into()));
        }
        if !(2..=3).contains(&step) {
            return Err(Error::InvalidSpec(format!("step must be 2 or 3, got {step}")));
        }
        if layer_dims.len() != step {
            return Err(Error::InvalidSpec(format!(
                "expected {step} layer dimensions, got {}",
                layer_dims.len()
            )));
        }
        if layer_dims[0] == 0 {
            return Err(Error::InvalidSpec("first layer must be non-trivial".into()));
        }
        let c0 = match &law {
            Law::Engel => {
                if step != 3 || layer_dims != [2, 1, 1] {
                    return Err(Error::InvalidSpec(
                        "engel law requires step 3 with layer_dims (2,1,1)".into(),
                    ));
                }
                None
            }
            Law::Bilinear { matrices } => {
                if step != 2 {
                    return Err(Error::InvalidSpec("bilinear law requires step 2".into()));
                }
                let (n1, n2) = (layer_dims[0], layer_dims[1]);
                if matrices.len() != n2 {
                    return Err(Error::InvalidSpec(format!(
                        "expected {n2} matrices for the second layer, got {}",
                        matrices.len()
                    )));
                }
                for (k, b) in matrices.iter().enumerate() {
                    if b.len() != n1 || b.iter().any(|row| row.len() != n1) {
                        return Err(Error::InvalidSpec(format!("matrix {k} is not {n1}x{n1}")));
                    }
                    for i in 0..n1 {
                        for j in 0..n1 {
                            if !b[i][j].is_finite() {
                                return Err(Error::InvalidSpec(format!("matrix {k} has non-finite entries")));
                            }
                            if b[i][j] + b[j][i] != 0.0 {
                                return Err(Error::InvalidSpec(format!(
                                    "matrix {k} is not skew-symmetric at ({i},{j})"
                                )));
                            }
                        }
                    }
                }
                // |B(u,v)_k| ≤ Σ_ij |B_k,ij| |u| |v|
                let c0 = matrices
                    .iter()
                    .map(|b| b.iter().flatten().map(|v| v.abs()).sum::<f64>().powi(2))
                    .sum::<f64>()
                    .sqrt();
                Some(c0)
            }
        };
        let mut offsets = Vec::with_capacity(step + 1);
        let mut acc = 0;
        offsets.push(0);
        for d in &layer_dims {
            acc += d;
            offsets.push(acc);
        }
        Ok(GroupSpec {
            name,
            step,
            layer_dims,
            law,
            offsets,
            c0,
        })
    }

    /// One of the registered groups: `heisenberg`, `rxh`, `engel`, `abelian3`.
    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "heisenberg" => GroupSpec::new(
                "heisenberg",
                2,
                vec![2, 1],
                Law::Bilinear {
                    matrices: vec![vec![vec![0.0, 0.5], vec![-0.5, 0.0]]],
                },
            ),
            // coordinates (w, x, y, z); w is the commuting direction
            "rxh" => GroupSpec::new(
                "rxh",
                2,
                vec![3, 1],
                Law::Bilinear {
                    matrices: vec![vec![
                        vec![0.0, 0.0, 0.0],
                        vec![0.0, 0.0, 0.5],
                        vec![0.0, -0.5, 0.0],
                    ]],
                },
            ),
            "engel" => GroupSpec::new("engel", 3, vec![2, 1, 1], Law::Engel),
            "abelian3" => GroupSpec::new("abelian3", 2, vec![3, 0], Law::Bilinear { matrices: vec![] }),
            other => Err(Error::InvalidSpec(format!(
                "unknown group '{other}' (known: {})",
                BUILTIN_GROUPS.join(", ")
            ))),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn law(&self) -> &Law {
        &self.law
    }

    /// Topological dimension `n = Σ nⱼ`.
    pub fn dim(&self) -> usize {
        self.offsets[self.step]
    }

    /// Dimension `m = n₁` of the horizontal layer.
    pub fn horizontal_dim(&self) -> usize {
        self.layer_dims[0]
    }

    /// Constant `C₀` with `|B(u,v)| ≤ C₀|u||v|`; `None` for step 3.
    pub fn c0(&self) -> Option<f64> {
        self.c0
    }

    pub fn is_engel(&self) -> bool {
        matches!(self.law, Law::Engel)
    }

    /// Coordinate range of layer `j` (1-based).
    pub fn layer_range(&self, j: usize) -> std::ops::Range<usize> {
        self.offsets[j - 1]..self.offsets[j]
    }

    /// Homogeneous weight (layer index) of every coordinate.
    pub fn weights(&self) -> Vec<u32> {
        (1..=self.step)
            .flat_map(|j| std::iter::repeat(j as u32).take(self.layer_dims[j - 1]))
            .collect()
    }

    pub fn zero(&self) -> Point {
        Point::zeros(self.dim())
    }

    /// Checks that `p` has this group's dimension.
    pub fn check(&self, p: &Point) -> Result<()> {
        let got = p.len();
        if got == self.dim() {
            return Ok(());
        }
        let layer = if got > self.dim() {
            format!("trailing coordinates of {}", self.name)
        } else {
            let j = (1..=self.step).find(|&j| self.offsets[j] > got).unwrap_or(self.step);
            format!("layer {j} of {}", self.name)
        };
        Err(Error::Dimension {
            layer,
            expected: self.dim(),
            got,
        })
    }

    fn check_horizontal(&self, h: &HorizontalVec) -> Result<()> {
        if h.0.len() != self.horizontal_dim() {
            return Err(Error::Dimension {
                layer: format!("layer 1 of {} (horizontal vector)", self.name),
                expected: self.horizontal_dim(),
                got: h.0.len(),
            });
        }
        Ok(())
    }

    /// The bilinear form `B(u, v)` of a step-2 group.
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        match &self.law {
            Law::Bilinear { matrices } => matrices.iter().map(|b| skew_form(b, u, v)).collect(),
            Law::Engel => panic!("bilinear form requested on a step-3 group"),
        }
    }

    /// The correction `R(p,q) = p·q − p − q`.
    pub fn correction(&self, p: &Point, q: &Point) -> Result<Vec<f64>> {
        let pq = self.multiply(p, q)?;
        Ok(pq.0.iter().zip(&p.0).zip(&q.0).map(|((r, a), b)| r - a - b).collect())
    }

    pub fn multiply(&self, p: &Point, q: &Point) -> Result<Point> {
        self.check(p)?;
        self.check(q)?;
        Ok(self.multiply_unchecked(&p.0, &q.0))
    }

    pub(crate) fn multiply_unchecked(&self, p: &[f64], q: &[f64]) -> Point {
        match &self.law {
            Law::Bilinear { matrices } => {
                let n1 = self.layer_dims[0];
                let mut out: Vec<f64> = p.iter().zip(q).map(|(a, b)| a + b).collect();
                for (k, b) in matrices.iter().enumerate() {
                    out[n1 + k] += skew_form(b, &p[..n1], &q[..n1]);
                }
                Point(out)
            }
            Law::Engel => {
                let (x, y, z, s) = (p[0], p[1], p[2], p[3]);
                let (a, b, c, d) = (q[0], q[1], q[2], q[3]);
                let cross = x * b - a * y;
                Point(vec![
                    x + a,
                    y + b,
                    z + c + 0.5 * cross,
                    s + d + 0.5 * (x * c - a * z) + (x - a) * cross / 12.0,
                ])
            }
        }
    }

    pub fn inverse(&self, p: &Point) -> Result<Point> {
        self.check(p)?;
        Ok(Point(p.0.iter().map(|v| -v).collect()))
    }

    /// Anisotropic dilation `δ_r`: layer `j` is scaled by `rʲ`.
    pub fn dilate(&self, r: f64, p: &Point) -> Result<Point> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::Domain(format!("dilation factor must be positive, got {r}")));
        }
        self.check(p)?;
        Ok(self.dilate_unchecked(r, &p.0))
    }

    pub(crate) fn dilate_unchecked(&self, r: f64, p: &[f64]) -> Point {
        let mut out = p.to_vec();
        for j in 1..=self.step {
            let f = r.powi(j as i32);
            for v in &mut out[self.layer_range(j)] {
                *v *= f;
            }
        }
        Point(out)
    }

    /// Homogeneous norm `(Σᵢ |p⁽ⁱ⁾|^{2s!/i})^{1/(2s!)}`.
    pub fn homogeneous_norm(&self, p: &Point) -> Result<f64> {
        self.check(p)?;
        Ok(self.homogeneous_norm_unchecked(&p.0))
    }

    pub(crate) fn homogeneous_norm_unchecked(&self, p: &[f64]) -> f64 {
        let e = 2 * (1..=self.step).product::<usize>();
        // rescale by the largest layer gauge to keep the powers in range
        let gauges: Vec<f64> = (1..=self.step)
            .map(|j| {
                let r = self.layer_range(j);
                p[r].iter().map(|v| v * v).sum::<f64>().sqrt().powf(1.0 / j as f64)
            })
            .collect();
        let scale = gauges.iter().cloned().fold(0.0, f64::max);
        if scale == 0.0 {
            return 0.0;
        }
        let sum: f64 = gauges.iter().map(|g| (g / scale).powi(e as i32)).sum();
        scale * sum.powf(1.0 / e as f64)
    }

    /// Embeds `h` as `(h, 0, …, 0)`.
    pub fn embed(&self, h: &HorizontalVec) -> Result<Point> {
        self.check_horizontal(h)?;
        let mut out = vec![0.0; self.dim()];
        out[..h.0.len()].copy_from_slice(&h.0);
        Ok(Point(out))
    }

    /// `p·(τh)`, a point on the horizontal segment through `p` along `h`.
    pub fn left_translate(&self, p: &Point, h: &HorizontalVec, tau: f64) -> Result<Point> {
        self.check(p)?;
        self.check_horizontal(h)?;
        let mut th = vec![0.0; self.dim()];
        for (t, v) in th.iter_mut().zip(&h.0) {
            *t = tau * v;
        }
        Ok(self.multiply_unchecked(&p.0, &th))
    }

    /// Left-invariant horizontal fields `X_j(p) = d/dτ p·(τeⱼ)|₀`, one row per `j`.
    pub fn horizontal_fields(&self, p: &[f64]) -> Vec<Vec<f64>> {
        let n = self.dim();
        let m = self.horizontal_dim();
        match &self.law {
            Law::Bilinear { matrices } => (0..m)
                .map(|j| {
                    let mut x = vec![0.0; n];
                    x[j] = 1.0;
                    for (k, b) in matrices.iter().enumerate() {
                        x[m + k] = (0..m).map(|i| p[i] * b[i][j]).sum();
                    }
                    x
                })
                .collect(),
            Law::Engel => {
                let (x, y, z) = (p[0], p[1], p[2]);
                vec![
                    vec![1.0, 0.0, -0.5 * y, -(x * y / 12.0 + 0.5 * z)],
                    vec![0.0, 1.0, 0.5 * x, x * x / 12.0],
                ]
            }
        }
    }

    /// Parses a comma-separated coordinate list into a conforming point.
    pub fn parse_point(&self, s: &str) -> Result<Point> {
        let coords = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("bad coordinate '{t}': {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let p = Point(coords);
        self.check(&p)?;
        if !p.is_finite() {
            return Err(Error::Domain("point has non-finite coordinates".into()));
        }
        Ok(p)
    }
}

/// `uᵀBv` for skew `B`, summed over the upper triangle so that swapping
/// `u` and `v` flips the sign bit-for-bit.
fn skew_form(b: &[Vec<f64>], u: &[f64], v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..u.len() {
        for j in (i + 1)..u.len() {
            if b[i][j] != 0.0 {
                acc += b[i][j] * (u[i] * v[j] - u[j] * v[i]);
            }
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn all_specs() -> Vec<GroupSpec> {
        BUILTIN_GROUPS.iter().map(|n| GroupSpec::builtin(n).unwrap()).collect()
    }

    #[test]
    fn heisenberg_product() {
        let g = GroupSpec::builtin("heisenberg").unwrap();
        let p = g.multiply(&Point(vec![1.0, 0.0, 0.0]), &Point(vec![0.0, 1.0, 0.0])).unwrap();
        assert_eq!(p.0, vec![1.0, 1.0, 0.5]);
    }

    #[test]
    fn engel_product() {
        let g = GroupSpec::builtin("engel").unwrap();
        let p = g
            .multiply(&Point(vec![1.0, 0.0, 0.0, 0.0]), &Point(vec![0.0, 1.0, 0.0, 0.0]))
            .unwrap();
        assert_eq!(p.0[..3], [1.0, 1.0, 0.5]);
        assert!((p.0[3] - 1.0 / 12.0).abs() < 1e-16);
    }

    #[test]
    fn identity_and_inverse() {
        for g in all_specs() {
            let p = Point((0..g.dim()).map(|i| 0.3 * i as f64 - 0.7).collect());
            assert_eq!(g.multiply(&p, &g.zero()).unwrap(), p);
            let inv = g.inverse(&p).unwrap();
            assert!(g.multiply(&p, &inv).unwrap().0.iter().all(|v| *v == 0.0));
        }
        let h = GroupSpec::builtin("heisenberg").unwrap();
        assert_eq!(h.inverse(&Point(vec![1.0, 2.0, 3.0])).unwrap().0, vec![-1.0, -2.0, -3.0]);
        assert_eq!(h.inverse(&h.zero()).unwrap(), h.zero());
    }

    #[test]
    fn dilation_examples() {
        let h = GroupSpec::builtin("heisenberg").unwrap();
        assert_eq!(h.dilate(2.0, &Point(vec![1.0, 1.0, 1.0])).unwrap().0, vec![2.0, 2.0, 4.0]);
        let e = GroupSpec::builtin("engel").unwrap();
        assert_eq!(
            e.dilate(2.0, &Point(vec![1.0, 1.0, 1.0, 1.0])).unwrap().0,
            vec![2.0, 2.0, 4.0, 8.0]
        );
        let p = Point(vec![0.1, -2.0, 3.5]);
        assert_eq!(h.dilate(1.0, &p).unwrap(), p);
        assert!(matches!(h.dilate(0.0, &p), Err(Error::Domain(_))));
        assert!(matches!(h.dilate(-1.0, &p), Err(Error::Domain(_))));
    }

    #[test]
    fn homogeneous_norm_examples() {
        let h = GroupSpec::builtin("heisenberg").unwrap();
        assert_eq!(h.homogeneous_norm(&Point(vec![0.0, 0.0, 1.0])).unwrap(), 1.0);
        assert_eq!(h.homogeneous_norm(&Point(vec![1.0, 0.0, 0.0])).unwrap(), 1.0);
        let p = Point(vec![0.3, 0.4, 2.0]);
        let expected = ((0.25f64).powi(2) + 4.0).powf(0.25);
        assert!((h.homogeneous_norm(&p).unwrap() - expected).abs() < 1e-15);
        assert_eq!(h.homogeneous_norm(&h.zero()).unwrap(), 0.0);
    }

    #[test]
    fn left_translate_examples() {
        let h = GroupSpec::builtin("heisenberg").unwrap();
        let p = Point(vec![0.0, 0.0, 1.0]);
        let dir = HorizontalVec(vec![1.0, 0.0]);
        assert_eq!(h.left_translate(&p, &dir, 0.0).unwrap(), p);
        assert_eq!(h.left_translate(&h.zero(), &dir, 1.0).unwrap().0, vec![1.0, 0.0, 0.0]);
        assert_eq!(h.left_translate(&p, &dir, 1.0).unwrap().0, vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn dimension_errors_name_the_layer() {
        let h = GroupSpec::builtin("heisenberg").unwrap();
        let err = h.multiply(&Point(vec![1.0, 2.0]), &h.zero()).unwrap_err();
        match err {
            Error::Dimension { layer, expected, got } => {
                assert!(layer.contains("layer 2"), "{layer}");
                assert_eq!((expected, got), (3, 2));
            }
            e => panic!("unexpected {e:?}"),
        }
        assert!(h.left_translate(&h.zero(), &HorizontalVec(vec![1.0]), 1.0).is_err());
    }

    #[test]
    fn spec_validation() {
        let bad = GroupSpec::new(
            "x",
            2,
            vec![2, 1],
            Law::Bilinear {
                matrices: vec![vec![vec![0.0, 0.5], vec![0.5, 0.0]]],
            },
        );
        assert!(matches!(bad, Err(Error::InvalidSpec(_))));
        assert!(GroupSpec::new("x", 2, vec![2, 1, 1], Law::Engel).is_err());
        assert!(GroupSpec::new("x", 3, vec![2, 2, 1], Law::Engel).is_err());
        assert!(GroupSpec::new("x", 4, vec![1, 1, 1, 1], Law::Engel).is_err());
        assert!(GroupSpec::new("x", 2, vec![2, 1], Law::Bilinear { matrices: vec![] }).is_err());
        assert!(GroupSpec::builtin("nope").is_err());
    }

    #[test]
    fn heisenberg_c0_is_one() {
        assert_eq!(GroupSpec::builtin("heisenberg").unwrap().c0(), Some(1.0));
        assert_eq!(GroupSpec::builtin("engel").unwrap().c0(), None);
    }

    #[test]
    fn json_round_trip() {
        for g in all_specs() {
            let back = GroupSpec::from_json(&g.to_json()).unwrap();
            assert_eq!(back, g);
        }
        let doc = r#"{"name":"h","step":2,"layer_dims":[2,1],
            "law":{"type":"bilinear","matrices":[[[0,1],[1,0]]]}}"#;
        assert!(GroupSpec::from_json(doc).is_err());
        let engel = r#"{"name":"e","step":3,"layer_dims":[2,1,1],"law":{"type":"engel"}}"#;
        assert!(GroupSpec::from_json(engel).unwrap().is_engel());
    }

    #[test]
    fn horizontal_fields_match_translation_derivative() {
        for g in all_specs() {
            let p: Vec<f64> = (0..g.dim()).map(|i| 0.4 - 0.25 * i as f64).collect();
            let fields = g.horizontal_fields(&p);
            for (j, xj) in fields.iter().enumerate() {
                let e = HorizontalVec::axis(g.horizontal_dim(), j);
                let t = 1e-6;
                let fwd = g.left_translate(&Point(p.clone()), &e, t).unwrap();
                let bwd = g.left_translate(&Point(p.clone()), &e, -t).unwrap();
                for k in 0..g.dim() {
                    let fd = (fwd.0[k] - bwd.0[k]) / (2.0 * t);
                    assert!((fd - xj[k]).abs() < 1e-9, "{} field {j} coord {k}", g.name());
                }
            }
        }
    }

    fn coords(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-3.0f64..3.0, n)
    }

    proptest! {
        #[test]
        fn group_axioms(spec_idx in 0usize..4, a in coords(4), b in coords(4), c in coords(4)) {
            let g = GroupSpec::builtin(BUILTIN_GROUPS[spec_idx]).unwrap();
            let n = g.dim();
            let (p, q, r) = (Point(a[..n].to_vec()), Point(b[..n].to_vec()), Point(c[..n].to_vec()));
            let lhs = g.multiply(&g.multiply(&p, &q).unwrap(), &r).unwrap();
            let rhs = g.multiply(&p, &g.multiply(&q, &r).unwrap()).unwrap();
            for k in 0..n {
                prop_assert!((lhs.0[k] - rhs.0[k]).abs() <= 1e-12 * (1.0 + lhs.0[k].abs()));
            }
            let inv = g.inverse(&p).unwrap();
            let left = g.multiply(&inv, &p).unwrap();
            prop_assert!(left.0.iter().all(|v| v.abs() <= 1e-12));
        }

        #[test]
        fn dilation_is_automorphism(spec_idx in 0usize..4, a in coords(4), b in coords(4), r in 0.05f64..20.0) {
            let g = GroupSpec::builtin(BUILTIN_GROUPS[spec_idx]).unwrap();
            let n = g.dim();
            let (p, q) = (Point(a[..n].to_vec()), Point(b[..n].to_vec()));
            let lhs = g.dilate(r, &g.multiply(&p, &q).unwrap()).unwrap();
            let rhs = g.multiply(&g.dilate(r, &p).unwrap(), &g.dilate(r, &q).unwrap()).unwrap();
            for k in 0..n {
                prop_assert!((lhs.0[k] - rhs.0[k]).abs() <= 1e-10 * (1.0 + lhs.0[k].abs()));
            }
            let np = g.homogeneous_norm(&p).unwrap();
            if np > 1e-6 {
                let ratio = g.homogeneous_norm(&g.dilate(3.0, &p).unwrap()).unwrap() / np;
                prop_assert!((ratio - 3.0).abs() < 1e-12);
            }
        }

        #[test]
        fn bilinear_is_skew_and_bounded(spec_idx in 0usize..2, u in coords(3), v in coords(3)) {
            let g = GroupSpec::builtin(["heisenberg", "rxh"][spec_idx]).unwrap();
            let m = g.horizontal_dim();
            let (u, v) = (&u[..m], &v[..m]);
            let buv = g.bilinear(u, v);
            let bvu = g.bilinear(v, u);
            for (a, b) in buv.iter().zip(&bvu) {
                prop_assert_eq!(a + b, 0.0);
            }
            let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb = buv.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!(nb <= g.c0().unwrap() * nu * nv + 1e-12);
        }
    }
}
