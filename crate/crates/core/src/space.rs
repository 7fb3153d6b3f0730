//! Calibration search space: named box-bounded parameters, unit-cube
//! normalization and Latin Hypercube initial designs.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// One behavioral weight with its box bounds, in raw units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpec {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub initial: f64,
}

impl ParameterSpec {
    pub fn new(name: impl Into<String>, lower: f64, upper: f64, initial: f64) -> Result<Self> {
        let spec = ParameterSpec {
            name: name.into(),
            lower,
            upper,
            initial,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Builds `[initial - w, initial + w]` with `w = max(min_half_width, 2 |initial|)`.
    pub fn around_initial(name: impl Into<String>, initial: f64, min_half_width: f64) -> Result<Self> {
        let w = min_half_width.max(2.0 * initial.abs());
        Self::new(name, initial - w, initial + w, initial)
    }

    fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::invalid("parameter name is empty"));
        }
        if !(self.lower.is_finite() && self.upper.is_finite() && self.initial.is_finite()) {
            return Err(Error::invalid(format!("parameter {}: non-finite bound", self.name)));
        }
        if !(self.lower < self.upper) {
            return Err(Error::invalid(format!(
                "parameter {}: lower {} must be < upper {}",
                self.name, self.lower, self.upper
            )));
        }
        if self.initial < self.lower || self.initial > self.upper {
            return Err(Error::invalid(format!(
                "parameter {}: initial {} outside [{}, {}]",
                self.name, self.initial, self.lower, self.upper
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Default minimum half-width used by [`ParameterSpec::around_initial`].
pub const DEFAULT_HALF_WIDTH: f64 = 5.0;

/// Raw-unit parameter values aligned with a [`ParameterSpace`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterVector(pub Vec<f64>);

/// Coordinates in the unit cube `[0, 1]^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UnitVector(pub Vec<f64>);

impl ParameterVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl UnitVector {
    /// Validates that every coordinate lies in `[0, 1]`.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::invalid(format!("unit coordinate {i} = {v} outside [0, 1]")));
        }
        Ok(UnitVector(values))
    }

    /// Clamps each coordinate into `[0, 1]`.
    pub fn clamped(values: Vec<f64>) -> Self {
        UnitVector(values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpace {
    specs: Vec<ParameterSpec>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl ParameterSpace {
    pub fn new(specs: Vec<ParameterSpec>) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::invalid("parameter space has no parameters"));
        }
        let mut index = HashMap::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            spec.validate()?;
            if index.insert(spec.name.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate parameter name {}", spec.name)));
            }
        }
        Ok(ParameterSpace { specs, index })
    }

    pub fn dimension(&self) -> usize {
        self.specs.len()
    }

    pub fn specs(&self) -> &[ParameterSpec] {
        &self.specs
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.specs.iter().map(|s| s.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn initial(&self) -> ParameterVector {
        ParameterVector(self.specs.iter().map(|s| s.initial).collect())
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                got,
            });
        }
        Ok(())
    }

    pub fn normalize(&self, v: &ParameterVector) -> Result<UnitVector> {
        self.check_dim(v.len())?;
        Ok(UnitVector(
            self.specs
                .iter()
                .zip(&v.0)
                .map(|(s, &x)| (x - s.lower) / s.width())
                .collect(),
        ))
    }

    pub fn denormalize(&self, u: &UnitVector) -> Result<ParameterVector> {
        self.check_dim(u.len())?;
        let u = UnitVector::new(u.0.clone())?;
        Ok(ParameterVector(
            self.specs
                .iter()
                .zip(&u.0)
                .map(|(s, &t)| s.lower + t * s.width())
                .collect(),
        ))
    }

    /// Clamps a raw vector into the box.
    pub fn clamp(&self, v: &ParameterVector) -> Result<ParameterVector> {
        self.check_dim(v.len())?;
        Ok(ParameterVector(
            self.specs
                .iter()
                .zip(&v.0)
                .map(|(s, &x)| x.clamp(s.lower, s.upper))
                .collect(),
        ))
    }

    /// Builds a vector from `(name, value)` pairs, which must cover every
    /// parameter exactly once. Errors name every offending parameter.
    pub fn vector_from_named<'a, I>(&self, pairs: I) -> Result<ParameterVector>
    where
        I: IntoIterator<Item = (&'a str, f64)>,
    {
        let mut values = vec![None; self.dimension()];
        let mut unknown = Vec::new();
        let mut repeated = Vec::new();
        for (name, value) in pairs {
            match self.index_of(name) {
                Some(i) if values[i].is_some() => repeated.push(name.to_string()),
                Some(i) => values[i] = Some(value),
                None => unknown.push(name.to_string()),
            }
        }
        let missing: Vec<&str> = values
            .iter()
            .zip(&self.specs)
            .filter(|(v, _)| v.is_none())
            .map(|(_, s)| s.name.as_str())
            .collect();
        let mut problems = Vec::new();
        if !missing.is_empty() {
            problems.push(format!("missing parameters: {}", missing.join(", ")));
        }
        if !unknown.is_empty() {
            problems.push(format!("unknown parameters: {}", unknown.join(", ")));
        }
        if !repeated.is_empty() {
            problems.push(format!("repeated parameters: {}", repeated.join(", ")));
        }
        if !problems.is_empty() {
            return Err(Error::invalid(problems.join("; ")));
        }
        Ok(ParameterVector(values.into_iter().map(Option::unwrap).collect()))
    }

    /// Latin Hypercube design of `n` points in `[0, 1)^d`. Each column holds
    /// exactly one value per stratum `[k/n, (k+1)/n)`, placed at a uniform
    /// random offset inside the stratum.
    pub fn lhs_sample(&self, n: usize, seed: u64) -> Result<Vec<UnitVector>> {
        lhs_sample(self.dimension(), n, seed)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(file, &path.display().to_string())
    }

    pub fn from_csv_reader<R: std::io::Read>(reader: R, label: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::parse(label, 1, e.to_string()))?
            .clone();
        if headers.iter().collect::<Vec<_>>() != ["name", "lower", "upper", "initial"] {
            return Err(Error::parse(label, 1, "expected header name,lower,upper,initial"));
        }
        let mut specs = Vec::new();
        for (i, row) in rdr.deserialize::<ParameterSpec>().enumerate() {
            let spec = row.map_err(|e| Error::parse(label, i + 2, e.to_string()))?;
            spec.validate()
                .map_err(|e| Error::parse(label, i + 2, e.to_string()))?;
            specs.push(spec);
        }
        Self::new(specs)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv_to(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn write_csv_to<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for spec in &self.specs {
            wtr.serialize(spec)
                .map_err(|e| Error::invalid(e.to_string()))?;
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))
    }
}

/// Free-standing LHS over `[0, 1)^d`.
pub fn lhs_sample(d: usize, n: usize, seed: u64) -> Result<Vec<UnitVector>> {
    if n == 0 {
        return Err(Error::invalid("LHS sample count must be >= 1"));
    }
    let mut rng = rng::rng_from(seed);
    let mut columns = Vec::with_capacity(d);
    let scale = n as f64;
    for _ in 0..d {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        let column: Vec<f64> = strata
            .into_iter()
            .map(|k| {
                let offset: f64 = rng.gen();
                let mut x = (k as f64 + offset) / scale;
                // Rounding can push a value onto the next stratum boundary.
                while x > 0.0 && (x * scale).floor() as usize > k {
                    x = x.next_down();
                }
                x
            })
            .collect();
        columns.push(column);
    }
    Ok((0..n)
        .map(|i| UnitVector(columns.iter().map(|c| c[i]).collect()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn space(bounds: &[(f64, f64)]) -> ParameterSpace {
        ParameterSpace::new(
            bounds
                .iter()
                .enumerate()
                .map(|(i, &(l, u))| ParameterSpec::new(format!("b{i}"), l, u, l).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn normalize_examples() {
        let s = space(&[(0.0, 10.0)]);
        assert_eq!(s.normalize(&ParameterVector(vec![5.0])).unwrap().0, vec![0.5]);
        let s = space(&[(-2.0, 2.0)]);
        assert_eq!(s.normalize(&ParameterVector(vec![1.0])).unwrap().0, vec![0.75]);
        let s = space(&[(-1.0, 3.0), (2.0, 4.0)]);
        assert_eq!(
            s.normalize(&ParameterVector(vec![-1.0, 2.0])).unwrap().0,
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn denormalize_corners() {
        let s = space(&[(-1.0, 3.0), (2.0, 4.0)]);
        assert_eq!(s.denormalize(&UnitVector(vec![0.0, 0.0])).unwrap().0, vec![-1.0, 2.0]);
        assert_eq!(s.denormalize(&UnitVector(vec![1.0, 1.0])).unwrap().0, vec![3.0, 4.0]);
    }

    #[test]
    fn dimension_and_range_errors() {
        let s = space(&[(0.0, 1.0), (0.0, 1.0)]);
        assert!(matches!(
            s.normalize(&ParameterVector(vec![0.5])),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
        assert!(matches!(
            s.denormalize(&UnitVector(vec![0.5, 1.5])),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn spec_validation() {
        assert!(ParameterSpec::new("a", 1.0, 1.0, 1.0).is_err());
        assert!(ParameterSpec::new("a", 0.0, 1.0, 2.0).is_err());
        let dup = vec![
            ParameterSpec::new("a", 0.0, 1.0, 0.0).unwrap(),
            ParameterSpec::new("a", 0.0, 1.0, 0.0).unwrap(),
        ];
        assert!(ParameterSpace::new(dup).is_err());
    }

    #[test]
    fn expander_defaults() {
        let zero = ParameterSpec::around_initial("z", 0.0, DEFAULT_HALF_WIDTH).unwrap();
        assert_eq!((zero.lower, zero.upper), (-5.0, 5.0));
        let big = ParameterSpec::around_initial("b", -4.0, DEFAULT_HALF_WIDTH).unwrap();
        assert_eq!((big.lower, big.upper), (-12.0, 4.0));
    }

    #[test]
    fn layout_follows_declaration_order() {
        let s = ParameterSpace::new(vec![
            ParameterSpec::new("zeta", 0.0, 1.0, 0.1).unwrap(),
            ParameterSpec::new("alpha", 0.0, 1.0, 0.2).unwrap(),
        ])
        .unwrap();
        assert_eq!(s.index_of("zeta"), Some(0));
        assert_eq!(s.index_of("alpha"), Some(1));
        let v = s.vector_from_named([("alpha", 0.7), ("zeta", 0.3)]).unwrap();
        assert_eq!(v.0, vec![0.3, 0.7]);
        let err = s.vector_from_named([("alpha", 0.7)]).unwrap_err().to_string();
        assert!(err.contains("zeta"), "{err}");
    }

    fn assert_stratified(sample: &[UnitVector], d: usize) {
        let n = sample.len();
        for j in 0..d {
            let mut hits = vec![0usize; n];
            for u in sample {
                let x = u.0[j];
                assert!((0.0..1.0).contains(&x));
                hits[(x * n as f64).floor() as usize] += 1;
            }
            assert!(hits.iter().all(|&h| h == 1), "dimension {j}: {hits:?}");
        }
    }

    #[test]
    fn lhs_quartiles_and_degenerate_case() {
        let s = lhs_sample(2, 4, 11).unwrap();
        assert_stratified(&s, 2);
        let one = lhs_sample(5, 1, 3).unwrap();
        assert_eq!(one.len(), 1);
        assert!(one[0].0.iter().all(|x| (0.0..1.0).contains(x)));
        assert!(lhs_sample(2, 0, 1).is_err());
        assert_eq!(lhs_sample(3, 10, 9).unwrap(), lhs_sample(3, 10, 9).unwrap());
        assert_ne!(lhs_sample(3, 10, 9).unwrap(), lhs_sample(3, 10, 10).unwrap());
    }

    #[test]
    fn lhs_high_dimension() {
        assert_stratified(&lhs_sample(477, 50, 2024).unwrap(), 477);
    }

    #[test]
    fn csv_round_trip() {
        let s = space(&[(-1.5, 2.25), (0.0, 1e-3)]);
        let mut buf = Vec::new();
        s.write_csv_to(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("name,lower,upper,initial\n"));
        assert_eq!(ParameterSpace::from_csv_reader(&buf[..], "s").unwrap(), s);
        let bad = "name,lower,upper,initial\na,1,0,0\n";
        assert!(matches!(
            ParameterSpace::from_csv_reader(bad.as_bytes(), "s.csv"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    proptest! {
        #[test]
        fn normalize_round_trip(
            bounds in prop::collection::vec((-1e3f64..1e3, 1e-3f64..1e3), 1..8),
            fracs in prop::collection::vec(0.0f64..=1.0, 8),
        ) {
            let s = space(&bounds.iter().map(|&(l, w)| (l, l + w)).collect::<Vec<_>>());
            let u = UnitVector(fracs[..s.dimension()].to_vec());
            let v = s.denormalize(&u).unwrap();
            let back = s.normalize(&v).unwrap();
            for (a, b) in u.0.iter().zip(&back.0) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn lhs_always_stratified(d in 1usize..6, n in 1usize..40, seed in any::<u64>()) {
            assert_stratified(&lhs_sample(d, n, seed).unwrap(), d);
        }
    }
}
