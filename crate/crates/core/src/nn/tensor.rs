use crate::error::{Error, Result};

/// Dense f32 array, row-major. Volumes are `[n, c, d, h, w]`, features `[n, f]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::InvalidInput(format!("{} values for shape {shape:?}", data.len())));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor { shape, data: vec![0.0; n] }
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    /// Spatial extent of a volume tensor.
    pub fn spatial(&self) -> [usize; 3] {
        [self.shape[2], self.shape[3], self.shape[4]]
    }

    /// Elements per batch item.
    pub fn item_len(&self) -> usize {
        self.data.len() / self.shape[0]
    }

    pub fn item(&self, n: usize) -> &[f32] {
        let l = self.item_len();
        &self.data[n * l..(n + 1) * l]
    }

    /// Channel `c` of item `n` of a volume tensor.
    pub fn channel(&self, n: usize, c: usize) -> &[f32] {
        let v: usize = self.shape[2..].iter().product();
        &self.item(n)[c * v..(c + 1) * v]
    }

    /// Stacks equally shaped `[c, d, h, w]` items into a batch.
    pub fn stack(items: &[&Tensor]) -> Result<Tensor> {
        let first = items.first().ok_or_else(|| Error::InvalidInput("empty batch".into()))?;
        let mut data = Vec::with_capacity(first.data.len() * items.len());
        for t in items {
            if t.shape != first.shape {
                return Err(Error::InvalidInput("batch items differ in shape".into()));
            }
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        Ok(Tensor { shape, data })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
