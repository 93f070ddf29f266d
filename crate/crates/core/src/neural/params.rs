use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::real::Real;

pub const INPUT_CHANNELS: usize = 6;
pub const OUTPUT_SIZE: usize = 2;
pub const LAYERS: usize = 2;
pub const DEFAULT_HIDDEN: usize = 96;
/// Gate blocks inside every stacked `4H` dimension.
pub const GATE_ORDER: [&str; 4] = ["input", "forget", "cell", "output"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Forward, Direction::Backward];

    fn tag(self) -> &'static str {
        match self {
            Direction::Forward => "fwd",
            Direction::Backward => "bwd",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Offsets of one direction of one layer inside the flat parameter vector.
#[derive(Clone, Copy, Debug)]
pub(crate) struct CellLayout {
    pub input: usize,
    pub w_input: usize,
    pub w_hidden: usize,
    pub bias: usize,
}

pub(crate) struct Layout {
    pub hidden: usize,
    pub cells: [[CellLayout; 2]; LAYERS],
    pub head_w: usize,
    pub head_b: usize,
    pub len: usize,
}

impl Layout {
    pub fn new(hidden: usize) -> Self {
        let g = 4 * hidden;
        let mut offset = 0;
        let mut cell = |input: usize| {
            let c = CellLayout {
                input,
                w_input: offset,
                w_hidden: offset + g * input,
                bias: offset + g * (input + hidden),
            };
            offset += g * (input + hidden + 1);
            c
        };
        let l0 = [cell(INPUT_CHANNELS), cell(INPUT_CHANNELS)];
        let l1 = [cell(2 * hidden), cell(2 * hidden)];
        let head_w = offset;
        let head_b = head_w + OUTPUT_SIZE * 2 * hidden;
        Self {
            hidden,
            cells: [l0, l1],
            head_w,
            head_b,
            len: head_b + OUTPUT_SIZE,
        }
    }

    pub fn specs(&self) -> Vec<TensorSpec> {
        let g = 4 * self.hidden;
        let mut out = Vec::new();
        for (layer, cells) in self.cells.iter().enumerate() {
            for (dir, c) in Direction::BOTH.iter().zip(cells) {
                let prefix = format!("lstm{}.{}", layer + 1, dir.tag());
                out.push(TensorSpec {
                    name: format!("{prefix}.w_input"),
                    rows: g,
                    cols: c.input,
                    offset: c.w_input,
                });
                out.push(TensorSpec {
                    name: format!("{prefix}.w_hidden"),
                    rows: g,
                    cols: self.hidden,
                    offset: c.w_hidden,
                });
                out.push(TensorSpec {
                    name: format!("{prefix}.bias"),
                    rows: g,
                    cols: 1,
                    offset: c.bias,
                });
            }
        }
        out.push(TensorSpec {
            name: "head.weight".into(),
            rows: OUTPUT_SIZE,
            cols: 2 * self.hidden,
            offset: self.head_w,
        });
        out.push(TensorSpec {
            name: "head.bias".into(),
            rows: OUTPUT_SIZE,
            cols: 1,
            offset: self.head_b,
        });
        out
    }
}

/// Weights of the two-layer bidirectional LSTM and its linear head, stored flat.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    hidden: usize,
    data: Vec<T>,
}

impl<T: Real> ModelParams<T> {
    pub fn zeros(hidden: usize) -> Self {
        let len = Layout::new(hidden).len;
        Self {
            hidden,
            data: vec![T::zero(); len],
        }
    }

    /// Uniform in `±1/sqrt(fan_in)` per matrix, forget-gate bias 1, other biases 0.
    pub fn init(hidden: usize, seed: u64) -> Self {
        let mut p = Self::zeros(hidden);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = p.layout();
        for spec in layout.specs() {
            let slice = &mut p.data[spec.range()];
            if spec.cols == 1 {
                if spec.name.starts_with("lstm") {
                    slice[hidden..2 * hidden].fill(T::one());
                }
                continue;
            }
            let bound = 1.0 / (spec.cols as f64).sqrt();
            for v in slice {
                *v = T::lit(rng.random_range(-bound..=bound));
            }
        }
        p
    }

    /// Wraps a flat vector laid out as [`ModelParams::tensor_specs`] describes.
    pub fn from_flat(hidden: usize, data: Vec<T>) -> Result<Self> {
        let expected = Layout::new(hidden).len;
        if hidden == 0 || data.len() != expected {
            return Err(Error::ModelContract(format!(
                "hidden size {hidden} needs {expected} parameters, got {}",
                data.len()
            )));
        }
        Ok(Self { hidden, data })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub(crate) fn layout(&self) -> Layout {
        Layout::new(self.hidden)
    }

    pub fn tensor_specs(&self) -> Vec<TensorSpec> {
        self.layout().specs()
    }

    pub fn tensor(&self, name: &str) -> Option<&[T]> {
        let spec = self.tensor_specs().into_iter().find(|s| s.name == name)?;
        Some(&self.data[spec.range()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [T]> {
        let spec = self.tensor_specs().into_iter().find(|s| s.name == name)?;
        Some(&mut self.data[spec.range()])
    }

    /// `tensor[row, col]` style name of a flat index.
    pub fn param_name(&self, index: usize) -> String {
        self.tensor_specs()
            .into_iter()
            .find(|s| s.range().contains(&index))
            .map(|s| {
                let k = index - s.offset;
                if s.cols == 1 {
                    format!("{}[{k}]", s.name)
                } else {
                    format!("{}[{}, {}]", s.name, k / s.cols, k % s.cols)
                }
            })
            .unwrap_or_else(|| format!("param[{index}]"))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
