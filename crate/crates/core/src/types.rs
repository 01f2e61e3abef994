//! Cell values, attribute types, and schemas.
//!
//! Cells are dynamically typed: a column holds 64-bit integers, 64-bit
//! floats, text, dense real vectors, or dense square matrices. Vector and
//! matrix cells carry their dimension in the column type, so every row of a
//! column has the same shape. Non-finite floats are never stored; any
//! operation that would produce one reports an error instead.

use std::fmt;

/// A dense, row-major, square real matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    dim: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(dim: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), dim * dim, "matrix data length must be dim^2");
        Matrix { dim, data }
    }

    pub fn zeros(dim: usize) -> Self {
        Matrix { dim, data: vec![0.0; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Matrix::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Outer product `u vᵀ` of two equal-length vectors.
    pub fn outer(u: &[f64], v: &[f64]) -> Self {
        assert_eq!(u.len(), v.len(), "outer product needs equal lengths");
        let dim = u.len();
        let mut data = Vec::with_capacity(dim * dim);
        for &ui in u {
            for &vj in v {
                data.push(ui * vj);
            }
        }
        Matrix { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    /// `(M + Mᵀ) / 2`, used to clean up rounding skew in accumulated
    /// covariance sums.
    pub fn symmetrized(&self) -> Matrix {
        let mut out = self.clone();
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                let avg = 0.5 * (self[(i, j)] + self[(j, i)]);
                out[(i, j)] = avg;
                out[(j, i)] = avg;
            }
        }
        out
    }

    pub fn scaled(&self, s: f64) -> Matrix {
        Matrix { dim: self.dim, data: self.data.iter().map(|v| v * s).collect() }
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.dim, other.dim, "matrix dimension mismatch");
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Matrix { dim: self.dim, data }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.dim, other.dim, "matrix dimension mismatch");
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Matrix { dim: self.dim, data }
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.dim + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.dim + j]
    }
}

/// A single cell value.
#[derive(Clone, Debug)]
pub enum Value {
    Int(i64),
    Real(f64),
    Text(String),
    Vector(Vec<f64>),
    Matrix(Matrix),
}

impl Value {
    pub fn type_of(&self) -> AttrType {
        match self {
            Value::Int(_) => AttrType::Int,
            Value::Real(_) => AttrType::Real,
            Value::Text(_) => AttrType::Text,
            Value::Vector(v) => AttrType::Vector(v.len()),
            Value::Matrix(m) => AttrType::Matrix(m.dim()),
        }
    }

    /// Numeric cells viewed as f64; integers promote losslessly enough for
    /// the value ranges this engine works with.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Real(r) => Some(*r),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_vector(&self) -> Option<&[f64]> {
        match self {
            Value::Vector(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_matrix(&self) -> Option<&Matrix> {
        match self {
            Value::Matrix(m) => Some(m),
            _ => None,
        }
    }

    /// True if the cell contains a NaN or infinity anywhere.
    pub fn has_non_finite(&self) -> bool {
        match self {
            Value::Int(_) | Value::Text(_) => false,
            Value::Real(r) => !r.is_finite(),
            Value::Vector(v) => v.iter().any(|x| !x.is_finite()),
            Value::Matrix(m) => m.data().iter().any(|x| !x.is_finite()),
        }
    }

    /// Total ordering used for canonical row sorting: by type rank, then by
    /// content. Floats compare by `total_cmp`, so equal means bit-equal.
    pub fn cmp_total(&self, other: &Value) -> std::cmp::Ordering {
        use std::cmp::Ordering;
        use Value::*;
        fn rank(v: &Value) -> u8 {
            match v {
                Int(_) => 0,
                Real(_) => 1,
                Text(_) => 2,
                Vector(_) => 3,
                Matrix(_) => 4,
            }
        }
        match (self, other) {
            (Int(a), Int(b)) => a.cmp(b),
            (Real(a), Real(b)) => a.total_cmp(b),
            (Text(a), Text(b)) => a.cmp(b),
            (Vector(a), Vector(b)) => {
                a.len().cmp(&b.len()).then_with(|| {
                    for (x, y) in a.iter().zip(b) {
                        let c = x.total_cmp(y);
                        if c != Ordering::Equal {
                            return c;
                        }
                    }
                    Ordering::Equal
                })
            }
            (Matrix(a), Matrix(b)) => {
                a.dim().cmp(&b.dim()).then_with(|| {
                    for (x, y) in a.data().iter().zip(b.data()) {
                        let c = x.total_cmp(y);
                        if c != Ordering::Equal {
                            return c;
                        }
                    }
                    Ordering::Equal
                })
            }
            (a, b) => rank(a).cmp(&rank(b)),
        }
    }
}

/// Bit-exact equality: floats match only when their bit patterns do. There
/// are no NaNs in stored data, so this is ordinary float equality except
/// that 0.0 and -0.0 differ.
impl PartialEq for Value {
    fn eq(&self, other: &Value) -> bool {
        self.cmp_total(other) == std::cmp::Ordering::Equal
    }
}

impl Eq for Value {}

impl std::hash::Hash for Value {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        match self {
            Value::Int(i) => {
                state.write_u8(0);
                i.hash(state);
            }
            Value::Real(r) => {
                state.write_u8(1);
                r.to_bits().hash(state);
            }
            Value::Text(t) => {
                state.write_u8(2);
                t.hash(state);
            }
            Value::Vector(v) => {
                state.write_u8(3);
                for x in v {
                    x.to_bits().hash(state);
                }
            }
            Value::Matrix(m) => {
                state.write_u8(4);
                m.dim().hash(state);
                for x in m.data() {
                    x.to_bits().hash(state);
                }
            }
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            // {:?} prints the shortest representation that round-trips,
            // and always distinguishes reals from integers ("1.0", "1e300").
            Value::Real(r) => write!(f, "{r:?}"),
            Value::Text(t) => write!(f, "{t}"),
            Value::Vector(v) => {
                write!(f, "[")?;
                for (i, x) in v.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{x:?}")?;
                }
                write!(f, "]")
            }
            Value::Matrix(m) => {
                write!(f, "[")?;
                for i in 0..m.dim() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "[")?;
                    for j in 0..m.dim() {
                        if j > 0 {
                            write!(f, ",")?;
                        }
                        write!(f, "{:?}", m[(i, j)])?;
                    }
                    write!(f, "]")?;
                }
                write!(f, "]")
            }
        }
    }
}

/// Column type tag. Vector and matrix columns carry a fixed dimension.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AttrType {
    Int,
    Real,
    Text,
    Vector(usize),
    Matrix(usize),
}

impl AttrType {
    /// Whether a cell of type `other` may be stored in a column of this
    /// type. Integers are accepted by real columns (promoted on read).
    pub fn accepts(&self, other: AttrType) -> bool {
        *self == other || (*self == AttrType::Real && other == AttrType::Int)
    }
}

impl fmt::Display for AttrType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrType::Int => write!(f, "int"),
            AttrType::Real => write!(f, "real"),
            AttrType::Text => write!(f, "text"),
            AttrType::Vector(d) => write!(f, "vector[{d}]"),
            AttrType::Matrix(d) => write!(f, "matrix[{d}x{d}]"),
        }
    }
}

/// An ordered list of named, typed attributes.
#[derive(Clone, Debug, PartialEq)]
pub struct Schema {
    attrs: Vec<(String, AttrType)>,
}

impl Schema {
    /// Builds a schema; attribute names must be unique.
    pub fn new(attrs: Vec<(String, AttrType)>) -> Result<Self, String> {
        for (i, (name, _)) in attrs.iter().enumerate() {
            if attrs[..i].iter().any(|(n, _)| n == name) {
                return Err(format!("duplicate attribute name `{name}`"));
            }
        }
        Ok(Schema { attrs })
    }

    pub fn from_pairs(pairs: &[(&str, AttrType)]) -> Self {
        Schema::new(pairs.iter().map(|(n, t)| (n.to_string(), *t)).collect())
            .expect("attribute names must be unique")
    }

    pub fn len(&self) -> usize {
        self.attrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attrs.is_empty()
    }

    pub fn attrs(&self) -> &[(String, AttrType)] {
        &self.attrs
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.attrs[idx].0
    }

    pub fn attr_type(&self, idx: usize) -> AttrType {
        self.attrs[idx].1
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.attrs.iter().position(|(n, _)| n == name)
    }

    /// Resolves a possibly qualified column reference against attribute
    /// names that may themselves be qualified (`alias.column`).
    ///
    /// An exact match wins. Otherwise a bare name `c` matches a single
    /// attribute named `q.c` for some qualifier `q`; zero matches is an
    /// unknown-attribute error and several is an ambiguity error.
    pub fn resolve(&self, qualifier: Option<&str>, name: &str) -> Result<usize, String> {
        let target = match qualifier {
            Some(q) => format!("{q}.{name}"),
            None => name.to_string(),
        };
        if let Some(idx) = self.index_of(&target) {
            return Ok(idx);
        }
        if qualifier.is_none() {
            let suffix = format!(".{name}");
            let hits: Vec<usize> = self
                .attrs
                .iter()
                .enumerate()
                .filter(|(_, (n, _))| n.ends_with(&suffix))
                .map(|(i, _)| i)
                .collect();
            match hits.len() {
                0 => {}
                1 => return Ok(hits[0]),
                _ => {
                    return Err(format!(
                        "ambiguous column `{name}`: matches {}",
                        hits.iter().map(|&i| self.name(i)).collect::<Vec<_>>().join(", ")
                    ))
                }
            }
        }
        Err(format!("unknown column `{target}`"))
    }

    pub fn names(&self) -> Vec<String> {
        self.attrs.iter().map(|(n, _)| n.clone()).collect()
    }
}
