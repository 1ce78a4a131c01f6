use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::real::Real;
use super::tape::Gradients;
use super::tensor::{numel, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A learnable tensor and its accumulated gradient.
#[derive(Clone, Debug)]
pub struct Parameter<F: Real = f32> {
    id: ParamId,
    name: String,
    pub value: Tensor<F>,
    grad: Tensor<F>,
}

impl<F: Real> Parameter<F> {
    pub fn id(&self) -> ParamId {
        self.id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn grad(&self) -> &Tensor<F> {
        &self.grad
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().iter_mut().for_each(|g| *g = F::zero());
    }
}

/// Weight initialisation rule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Uniform in `[-1/√fan_in, 1/√fan_in]`.
    Uniform { fan_in: usize },
    Zeros,
    Ones,
}

/// Something that hands out parameter slots in a fixed order.
pub trait Allocator {
    fn alloc(&mut self, name: &str, shape: &[usize], init: Init) -> ParamId;
}

/// All parameters of a model, in allocation order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<F: Real = f32> {
    params: Vec<Parameter<F>>,
}

impl<F: Real> ParamStore<F> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<F>) -> ParamId {
        let id = ParamId(self.params.len());
        let grad = Tensor::zeros(value.shape().to_vec());
        self.params.push(Parameter {
            id,
            name: name.into(),
            value,
            grad,
        });
        id
    }

    pub fn get(&self, id: ParamId) -> &Parameter<F> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter<F> {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<F> {
        &self.params[id.0].value
    }

    /// Replaces a parameter value, keeping its shape.
    pub fn set_value(&mut self, id: ParamId, value: Tensor<F>) {
        let p = &mut self.params[id.0];
        assert_eq!(p.value.shape(), value.shape(), "set_value on {}", p.name);
        p.value = value;
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<F>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<F>> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(Parameter::zero_grad);
    }

    /// Adds `scale ·` every parameter gradient in `grads`.
    pub fn accumulate(&mut self, grads: &Gradients<F>, scale: F) {
        for (id, g) in grads.params() {
            let p = &mut self.params[id.0];
            for (dst, &src) in p.grad.data_mut().iter_mut().zip(g.data()) {
                *dst = *dst + src * scale;
            }
        }
    }

    pub fn by_name(&self, name: &str) -> Option<&Parameter<F>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn initializer(&mut self, seed: u64) -> Initializer<'_, F> {
        Initializer {
            store: self,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

/// Allocates parameters into a store, drawing initial values from a seeded
/// generator in allocation order.
pub struct Initializer<'a, F: Real> {
    store: &'a mut ParamStore<F>,
    rng: ChaCha8Rng,
}

impl<F: Real> Allocator for Initializer<'_, F> {
    fn alloc(&mut self, name: &str, shape: &[usize], init: Init) -> ParamId {
        let value = match init {
            Init::Zeros => Tensor::zeros(shape.to_vec()),
            Init::Ones => Tensor::full(shape.to_vec(), F::one()),
            Init::Uniform { fan_in } => {
                let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                let rng = &mut self.rng;
                Tensor::from_fn(shape.to_vec(), |_| F::cast(rng.random_range(-bound..=bound)))
            }
        };
        self.store.insert(name, value)
    }
}

/// Counts learnable scalars without allocating storage.
#[derive(Debug, Default)]
pub struct ShapeCounter {
    next: usize,
    scalars: usize,
}

impl ShapeCounter {
    pub fn scalars(&self) -> usize {
        self.scalars
    }

    pub fn tensors(&self) -> usize {
        self.next
    }
}

impl Allocator for ShapeCounter {
    fn alloc(&mut self, _name: &str, shape: &[usize], _init: Init) -> ParamId {
        self.scalars += numel(shape);
        self.next += 1;
        ParamId(self.next - 1)
    }
}
