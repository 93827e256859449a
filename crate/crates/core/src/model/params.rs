use super::math::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<F>,
}

impl<F: Real> Tensor<F> {
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor { name: name.into(), shape, data: vec![F::zero(); n] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn cast<G: Real>(&self) -> Tensor<G> {
        Tensor { name: self.name.clone(), shape: self.shape.clone(), data: self.data.iter().map(|x| G::of(x.f64())).collect() }
    }
}

/// Shape and initialization bound of one parameter tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub fan_in: usize,
}

impl TensorSpec {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, fan_in: usize) -> Self {
        TensorSpec { name: name.into(), shape, fan_in }
    }
}

/// One gradient buffer per parameter tensor, same order and sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<F> {
    pub bufs: Vec<Vec<F>>,
}

impl<F: Real> Gradients<F> {
    pub fn zeros_like(params: &[Tensor<F>]) -> Self {
        Gradients { bufs: params.iter().map(|t| vec![F::zero(); t.len()]).collect() }
    }

    pub fn zero(&mut self) {
        for b in &mut self.bufs {
            b.iter_mut().for_each(|x| *x = F::zero());
        }
    }

    pub fn add_assign(&mut self, other: &Gradients<F>) {
        for (a, b) in self.bufs.iter_mut().zip(&other.bufs) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }

    pub fn scale(&mut self, factor: F) {
        for b in &mut self.bufs {
            b.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.bufs.iter().flatten().map(|x| x.f64() * x.f64()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.bufs.iter().flatten().all(|x| x.is_finite())
    }
}
