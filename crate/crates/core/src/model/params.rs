use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::linalg::Tensor;

/// Layer widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub embed: usize,
    /// Per direction; encoder states are twice this wide.
    pub enc_hidden: usize,
    pub dec_hidden: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Dims {
            embed: 50,
            enc_hidden: 32,
            dec_hidden: 64,
        }
    }
}

/// Gate weights stacked as `[update; reset; candidate]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub w: Tensor,
    pub u: Tensor,
    pub b: Tensor,
}

impl GruParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        GruParams {
            w: Tensor::zeros(3 * hidden, input),
            u: Tensor::zeros(3 * hidden, hidden),
            b: Tensor::zeros(3 * hidden, 1),
        }
    }

    pub fn hidden(&self) -> usize {
        self.u.cols
    }
}

/// Every trainable parameter of the encoder-decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: Dims,
    /// `vocab_len + 1` rows; the last row embeds unknown words.
    pub embedding: Tensor,
    pub enc_fwd: GruParams,
    pub enc_bwd: GruParams,
    /// Decoder initial state from the last backward encoder state.
    pub init_w: Tensor,
    pub init_b: Tensor,
    /// Input is `[embedding of previous token; attention context]`.
    pub dec: GruParams,
    /// Bilinear attention, `dec_hidden × 2·enc_hidden`.
    pub attn: Tensor,
    /// Generate-mode scores, one row per `V_SQL` token.
    pub out: Tensor,
    /// Copy-mode scores, `2·enc_hidden × dec_hidden`.
    pub copy: Tensor,
}

pub const TENSOR_NAMES: [&str; TENSOR_COUNT] = [
    "embedding",
    "enc_fwd.w",
    "enc_fwd.u",
    "enc_fwd.b",
    "enc_bwd.w",
    "enc_bwd.u",
    "enc_bwd.b",
    "init.w",
    "init.b",
    "dec.w",
    "dec.u",
    "dec.b",
    "attn",
    "out",
    "copy",
];

pub const TENSOR_COUNT: usize = 15;
const MAGIC: &[u8; 8] = b"SQLGENP1";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParamsDecodeError {
    #[error("not a parameter blob")]
    BadMagic,
    #[error("parameter blob truncated")]
    Truncated,
    #[error("tensor `{name}` is {got_rows}x{got_cols}, expected {rows}x{cols}")]
    Shape {
        name: String,
        rows: usize,
        cols: usize,
        got_rows: usize,
        got_cols: usize,
    },
    #[error("expected {expected} tensors, found {got}")]
    Count { expected: usize, got: usize },
}

impl ModelParams {
    pub fn zeros(dims: Dims, vocab_len: usize, sql_len: usize) -> Self {
        let two_h = 2 * dims.enc_hidden;
        ModelParams {
            dims,
            embedding: Tensor::zeros(vocab_len + 1, dims.embed),
            enc_fwd: GruParams::zeros(dims.embed, dims.enc_hidden),
            enc_bwd: GruParams::zeros(dims.embed, dims.enc_hidden),
            init_w: Tensor::zeros(dims.dec_hidden, dims.enc_hidden),
            init_b: Tensor::zeros(dims.dec_hidden, 1),
            dec: GruParams::zeros(dims.embed + two_h, dims.dec_hidden),
            attn: Tensor::zeros(dims.dec_hidden, two_h),
            out: Tensor::zeros(sql_len, dims.dec_hidden),
            copy: Tensor::zeros(two_h, dims.dec_hidden),
        }
    }

    /// Uniform(-scale, scale) initialization of every entry.
    pub fn init_uniform<R: Rng + ?Sized>(
        dims: Dims,
        vocab_len: usize,
        sql_len: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(dims, vocab_len, sql_len);
        for t in p.tensors_mut() {
            for x in t.data.iter_mut() {
                *x = rng.random_range(-scale..scale);
            }
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.dims, self.vocab_len(), self.sql_len())
    }

    /// Vocabulary size (without the unknown-word row).
    pub fn vocab_len(&self) -> usize {
        self.embedding.rows - 1
    }

    pub fn sql_len(&self) -> usize {
        self.out.rows
    }

    pub fn tensors(&self) -> [&Tensor; TENSOR_COUNT] {
        [
            &self.embedding,
            &self.enc_fwd.w,
            &self.enc_fwd.u,
            &self.enc_fwd.b,
            &self.enc_bwd.w,
            &self.enc_bwd.u,
            &self.enc_bwd.b,
            &self.init_w,
            &self.init_b,
            &self.dec.w,
            &self.dec.u,
            &self.dec.b,
            &self.attn,
            &self.out,
            &self.copy,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; TENSOR_COUNT] {
        [
            &mut self.embedding,
            &mut self.enc_fwd.w,
            &mut self.enc_fwd.u,
            &mut self.enc_fwd.b,
            &mut self.enc_bwd.w,
            &mut self.enc_bwd.u,
            &mut self.enc_bwd.b,
            &mut self.init_w,
            &mut self.init_b,
            &mut self.dec.w,
            &mut self.dec.u,
            &mut self.dec.b,
            &mut self.attn,
            &mut self.out,
            &mut self.copy,
        ]
    }

    pub fn named_tensors(&self) -> impl Iterator<Item = (&'static str, &Tensor)> {
        TENSOR_NAMES.into_iter().zip(self.tensors())
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    /// Little-endian blob: magic, tensor count, then per tensor
    /// `rows, cols, data`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.param_count() * 8 + TENSOR_COUNT * 16);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(TENSOR_COUNT as u64).to_le_bytes());
        for t in self.tensors() {
            out.extend_from_slice(&(t.rows as u64).to_le_bytes());
            out.extend_from_slice(&(t.cols as u64).to_le_bytes());
            for x in &t.data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    /// Decodes a blob written by [`to_bytes`](Self::to_bytes); every tensor
    /// shape must match `dims`, `vocab_len` and `sql_len`.
    pub fn from_bytes(
        bytes: &[u8],
        dims: Dims,
        vocab_len: usize,
        sql_len: usize,
    ) -> Result<Self, ParamsDecodeError> {
        let mut p = Self::zeros(dims, vocab_len, sql_len);
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(ParamsDecodeError::BadMagic);
        }
        let mut pos = 8;
        let read_u64 = |pos: &mut usize| -> Result<u64, ParamsDecodeError> {
            let chunk = bytes.get(*pos..*pos + 8).ok_or(ParamsDecodeError::Truncated)?;
            *pos += 8;
            Ok(u64::from_le_bytes(chunk.try_into().expect("8 bytes")))
        };
        let count = read_u64(&mut pos)? as usize;
        if count != TENSOR_COUNT {
            return Err(ParamsDecodeError::Count {
                expected: TENSOR_COUNT,
                got: count,
            });
        }
        for (name, t) in TENSOR_NAMES.into_iter().zip(p.tensors_mut()) {
            let rows = read_u64(&mut pos)? as usize;
            let cols = read_u64(&mut pos)? as usize;
            if rows != t.rows || cols != t.cols {
                return Err(ParamsDecodeError::Shape {
                    name: name.into(),
                    rows: t.rows,
                    cols: t.cols,
                    got_rows: rows,
                    got_cols: cols,
                });
            }
            for x in t.data.iter_mut() {
                *x = f64::from_bits(read_u64(&mut pos)?);
            }
        }
        if pos != bytes.len() {
            return Err(ParamsDecodeError::Truncated);
        }
        Ok(p)
    }
}
