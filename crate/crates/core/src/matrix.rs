//! Dense row-major operand/result matrices and their on-disk formats.
//!
//! Binary layout (little-endian), 16-byte header followed by raw codes:
//!
//! | offset | size | field                                  |
//! |--------|------|----------------------------------------|
//! | 0      | 4    | magic `RMLM`                           |
//! | 4      | 1    | role: 0=X 1=W 2=Y 3=Z                  |
//! | 5      | 1    | format: 0=FP16 1=E4M3 2=E5M2           |
//! | 6      | 2    | reserved, zero                         |
//! | 8      | 4    | rows (u32)                             |
//! | 12     | 4    | cols (u32)                             |
//!
//! FP16 codes take two bytes each, FP8 codes one byte.

use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::element::Element;
use crate::error::{Result, SimError};
use crate::fp::{Fp16, Fp8, Fp8Format};

/// Which operand of `Z = (X ∘ W) ⋆ Y` a matrix plays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    X,
    W,
    Y,
    Z,
}

impl Role {
    fn code(self) -> u8 {
        match self {
            Role::X => 0,
            Role::W => 1,
            Role::Y => 2,
            Role::Z => 3,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        Ok(match c {
            0 => Role::X,
            1 => Role::W,
            2 => Role::Y,
            3 => Role::Z,
            other => return Err(SimError::Format(format!("unknown role byte {other}"))),
        })
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, PartialEq)]
pub struct Matrix<T> {
    role: Role,
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Copy> Matrix<T> {
    pub fn new(role: Role, rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(SimError::DimensionMismatch(format!("{role} must be non-empty, got {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(SimError::DimensionMismatch(format!(
                "{role} is {rows}x{cols} but holds {} elements",
                data.len()
            )));
        }
        Ok(Matrix { role, rows, cols, data })
    }

    pub fn filled(role: Role, rows: usize, cols: usize, value: T) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Matrix { role, rows, cols, data: vec![value; rows * cols] }
    }

    pub fn from_fn(role: Role, rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { role, rows, cols, data }
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn map<U: Copy>(&self, f: impl FnMut(T) -> U) -> Matrix<U> {
        Matrix { role: self.role, rows: self.rows, cols: self.cols, data: self.data.iter().copied().map(f).collect() }
    }

    pub fn transpose(&self) -> Self {
        Matrix::from_fn(self.role, self.cols, self.rows, |r, c| self.get(c, r))
    }

    /// Grows to `rows x cols`, filling new cells with `fill`.
    pub fn padded(&self, rows: usize, cols: usize, fill: T) -> Self {
        assert!(rows >= self.rows && cols >= self.cols);
        Matrix::from_fn(self.role, rows, cols, |r, c| if r < self.rows && c < self.cols { self.get(r, c) } else { fill })
    }

    /// Top-left `rows x cols` block.
    pub fn cropped(&self, rows: usize, cols: usize) -> Self {
        assert!(rows <= self.rows && cols <= self.cols);
        Matrix::from_fn(self.role, rows, cols, |r, c| self.get(r, c))
    }
}

impl<T: Element> Matrix<T> {
    /// Encoding-level equality (distinguishes `±0`, compares NaN payloads).
    pub fn same(&self, other: &Self) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self.data.iter().zip(&other.data).all(|(a, b)| a.same(*b))
    }

    pub fn to_f64(&self) -> Matrix<f64> {
        self.map(Element::to_f64)
    }

    /// Parses the text format: one row per line, whitespace or comma separated
    /// decimal values (`inf`, `-inf`, `nan` accepted). Blank lines and `#`
    /// comments are ignored.
    pub fn parse_text(role: Role, text: &str) -> Result<Self> {
        let mut rows = 0;
        let mut cols = None;
        let mut data = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let before = data.len();
            for tok in line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| SimError::Format(format!("line {}: `{tok}` is not a number", lineno + 1)))?;
                data.push(T::from_f64(v));
            }
            let width = data.len() - before;
            match cols {
                None => cols = Some(width),
                Some(c) if c != width => {
                    return Err(SimError::Format(format!("line {}: expected {c} values, found {width}", lineno + 1)))
                }
                _ => {}
            }
            rows += 1;
        }
        Matrix::new(role, rows, cols.unwrap_or(0), data)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in 0..self.rows {
            let line: Vec<String> = self.row(r).iter().map(|v| v.to_f64().to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

impl<T: Copy + fmt::Debug> fmt::Debug for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} {}x{}", self.role, self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        Ok(())
    }
}

/// A matrix as it sits in memory: native elements, or compressed FP8 codes
/// that the cast unit widens on load.
#[derive(Debug, Clone, PartialEq)]
pub enum IoMatrix<T: Copy> {
    Native(Matrix<T>),
    Fp8(Matrix<Fp8>),
}

impl<T: Copy> IoMatrix<T> {
    pub fn rows(&self) -> usize {
        match self {
            IoMatrix::Native(m) => m.rows(),
            IoMatrix::Fp8(m) => m.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            IoMatrix::Native(m) => m.cols(),
            IoMatrix::Fp8(m) => m.cols(),
        }
    }

    pub fn role(&self) -> Role {
        match self {
            IoMatrix::Native(m) => m.role(),
            IoMatrix::Fp8(m) => m.role(),
        }
    }

    pub fn is_fp8(&self) -> bool {
        matches!(self, IoMatrix::Fp8(_))
    }
}

impl<T: Element> IoMatrix<T> {
    /// Widened view, as the input cast unit would deliver it.
    pub fn widen(&self) -> Matrix<T> {
        match self {
            IoMatrix::Native(m) => m.clone(),
            IoMatrix::Fp8(m) => m.map(T::from_fp8),
        }
    }
}

impl<T: Copy> From<Matrix<T>> for IoMatrix<T> {
    fn from(m: Matrix<T>) -> Self {
        IoMatrix::Native(m)
    }
}

/// Matrices of raw hardware codes, as stored in files.
pub type CodeMatrix = IoMatrix<Fp16>;

const MAGIC: &[u8; 4] = b"RMLM";

pub fn write_binary<W: Write>(out: &mut W, m: &CodeMatrix) -> Result<()> {
    let mut header = [0u8; 16];
    header[..4].copy_from_slice(MAGIC);
    header[4] = m.role().code();
    header[5] = match m {
        IoMatrix::Native(_) => 0,
        IoMatrix::Fp8(f) => match f.data().first().map(|x| x.format()) {
            Some(Fp8Format::E4M3) | None => 1,
            Some(Fp8Format::E5M2) => 2,
        },
    };
    header[8..12].copy_from_slice(&(m.rows() as u32).to_le_bytes());
    header[12..16].copy_from_slice(&(m.cols() as u32).to_le_bytes());
    out.write_all(&header)?;
    match m {
        IoMatrix::Native(h) => {
            let bytes: Vec<u8> = h.data().iter().flat_map(|x| x.to_bits().to_le_bytes()).collect();
            out.write_all(&bytes)?;
        }
        IoMatrix::Fp8(f) => {
            let fmt = f.get(0, 0).format();
            if f.data().iter().any(|x| x.format() != fmt) {
                return Err(SimError::Format("FP8 matrix mixes formats".into()));
            }
            let bytes: Vec<u8> = f.data().iter().map(|x| x.to_bits()).collect();
            out.write_all(&bytes)?;
        }
    }
    Ok(())
}

pub fn read_binary<R: Read>(input: &mut R) -> Result<CodeMatrix> {
    let mut header = [0u8; 16];
    input.read_exact(&mut header)?;
    if &header[..4] != MAGIC {
        return Err(SimError::Format("bad magic, expected RMLM".into()));
    }
    let role = Role::from_code(header[4])?;
    let rows = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| SimError::Format(format!("dimensions {rows}x{cols} overflow")))?;
    match header[5] {
        0 => {
            let mut bytes = vec![0u8; count * 2];
            input.read_exact(&mut bytes)?;
            let data = bytes.chunks_exact(2).map(|b| Fp16::from_bits(u16::from_le_bytes([b[0], b[1]]))).collect();
            Ok(IoMatrix::Native(Matrix::new(role, rows, cols, data)?))
        }
        f @ (1 | 2) => {
            let format = if f == 1 { Fp8Format::E4M3 } else { Fp8Format::E5M2 };
            let mut bytes = vec![0u8; count];
            input.read_exact(&mut bytes)?;
            let data = bytes.into_iter().map(|b| Fp8::from_bits(b, format)).collect();
            Ok(IoMatrix::Fp8(Matrix::new(role, rows, cols, data)?))
        }
        other => Err(SimError::Format(format!("unknown format byte {other}"))),
    }
}
