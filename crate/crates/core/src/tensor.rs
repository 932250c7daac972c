//! Dense row-major `f64` tensors and their on-disk format.
//!
//! Every operation in the model sees a tensor through its *matrix view*:
//! the last extent is the column count and all leading extents collapse
//! into rows. Rank-0 tensors are scalars with one row and one column.

use std::io::{self, BufRead, Write};

use thiserror::Error;

/// Magic token that opens the header line of a serialized tensor.
pub const TENSOR_MAGIC: &str = "FTPK1";

#[derive(Debug, Error, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("buffer of length {len} cannot have shape {shape:?}")]
    BadLength { shape: Vec<usize>, len: usize },
    #[error("non-finite value {value} at flat index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("attention query row {0} has every key masked")]
    AllMasked(usize),
    #[error("model dimension {dim} is not divisible by {heads} heads")]
    HeadsDoNotDivide { dim: usize, heads: usize },
    #[error("not a probability distribution: sum = {0}")]
    NotADistribution(f64),
    #[error("malformed tensor file: {0}")]
    Format(String),
}

impl From<io::Error> for TensorError {
    fn from(e: io::Error) -> Self {
        TensorError::Format(e.to_string())
    }
}

/// A dense tensor with an optional gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::BadLength { shape, len: data.len() });
        }
        Ok(Tensor {
            shape,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let mut t = Self::zeros(shape);
        t.data.iter_mut().for_each(|x| *x = value);
        t
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![value],
            requires_grad: false,
            grad: None,
        }
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, TensorError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(TensorError::ShapeMismatch {
                    op: "from_rows",
                    left: vec![cols],
                    right: vec![row.len()],
                });
            }
            data.extend_from_slice(row);
        }
        Tensor::new(vec![rows.len(), cols], data)
    }

    /// Row vector `[1 x n]`.
    pub fn row(values: &[f64]) -> Self {
        Tensor::new(vec![1, values.len()], values.to_vec()).expect("row shape")
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Marks the tensor as a trainable parameter and clears its gradient.
    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self.grad = None;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// `(rows, cols)` of the matrix view.
    pub fn dims2(&self) -> (usize, usize) {
        match self.shape.split_last() {
            None => (1, 1),
            Some((&cols, lead)) => (lead.iter().product(), cols),
        }
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        let (_, cols) = self.dims2();
        self.data[r * cols + c]
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        let (_, cols) = self.dims2();
        &self.data[r * cols..(r + 1) * cols]
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor, TensorError> {
        Tensor::new(shape.to_vec(), self.data.clone())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
            requires_grad: false,
            grad: None,
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Errors on the first NaN or infinite entry.
    pub fn validate_finite(&self) -> Result<(), TensorError> {
        match self.data.iter().position(|x| !x.is_finite()) {
            Some(index) => Err(TensorError::NonFinite {
                index,
                value: self.data[index],
            }),
            None => Ok(()),
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    /// Adds `g` into the gradient buffer, allocating it on first use.
    pub fn accumulate_grad(&mut self, g: &[f64]) {
        debug_assert_eq!(g.len(), self.data.len());
        match &mut self.grad {
            Some(buf) => buf.iter_mut().zip(g).for_each(|(b, x)| *b += x),
            None => self.grad = Some(g.to_vec()),
        }
    }

    /// Writes `FTPK1 <rank> <ext...>\n` followed by little-endian `f64`s.
    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        let mut header = format!("{} {}", TENSOR_MAGIC, self.shape.len());
        for e in &self.shape {
            header.push(' ');
            header.push_str(&e.to_string());
        }
        header.push('\n');
        w.write_all(header.as_bytes())?;
        let mut bytes = Vec::with_capacity(self.data.len() * 8);
        for x in &self.data {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&bytes)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("write to Vec");
        out
    }

    pub fn read_from<R: BufRead>(r: &mut R) -> Result<Tensor, TensorError> {
        let mut line = String::new();
        let n = r.read_line(&mut line)?;
        if n == 0 {
            return Err(TensorError::Format("unexpected end of input".into()));
        }
        let line = line
            .strip_suffix('\n')
            .ok_or_else(|| TensorError::Format("header line is not newline-terminated".into()))?;
        let mut parts = line.split(' ');
        if parts.next() != Some(TENSOR_MAGIC) {
            return Err(TensorError::Format(format!("bad magic in header {line:?}")));
        }
        let parse = |s: Option<&str>| -> Result<usize, TensorError> {
            s.ok_or_else(|| TensorError::Format("truncated header".into()))?
                .parse()
                .map_err(|_| TensorError::Format(format!("bad integer in header {line:?}")))
        };
        let rank = parse(parts.next())?;
        let shape = (0..rank).map(|_| parse(parts.next())).collect::<Result<Vec<_>, _>>()?;
        if parts.next().is_some() {
            return Err(TensorError::Format(format!("trailing fields in header {line:?}")));
        }
        let count: usize = shape.iter().product();
        let mut bytes = vec![0u8; count * 8];
        r.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Tensor::new(shape, data)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Tensor, TensorError> {
        let mut cursor = io::Cursor::new(bytes);
        let t = Tensor::read_from(&mut cursor)?;
        if (cursor.position() as usize) != bytes.len() {
            return Err(TensorError::Format("trailing bytes after tensor".into()));
        }
        Ok(t)
    }

    pub fn save(&self, path: &std::path::Path) -> io::Result<()> {
        std::fs::write(path, self.to_bytes())
    }

    pub fn load(path: &std::path::Path) -> Result<Tensor, TensorError> {
        let bytes = std::fs::read(path)?;
        Tensor::from_bytes(&bytes)
    }
}
