//! Runtime-composable transformation chains applied to every sampled value
//! before classification.
//!
//! A chain is written as functor invocations joined by `|`, for example
//! `mul(2,3,4) | add(1) | length`. A functor takes either no argument or a constant
//! vector; a single constant is broadcast to the current feature dimension. Each
//! functor declares how it maps the feature dimension, so a parsed chain carries its
//! output dimension and never needs a dimension check during evaluation.

use crate::field::FieldVector;
use crate::scalar::Scalar;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

/// Default maximum number of functors per chain.
pub const DEFAULT_MAX_CHAIN_LENGTH: usize = 5;

/// Per-dimension implementation of a functor. The argument is `Some` exactly when
/// the functor takes one, already broadcast to the input dimension.
pub type Evaluator<S> =
    Arc<dyn Fn(&FieldVector<S>, Option<&FieldVector<S>>) -> FieldVector<S> + Send + Sync>;

#[derive(Clone)]
pub struct FunctorDescriptor {
    pub name: String,
    pub takes_argument: bool,
    /// Output feature dimension for each input dimension 1..=4.
    pub domain_map: fn(usize) -> usize,
}

impl fmt::Debug for FunctorDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FunctorDescriptor")
            .field("name", &self.name)
            .field("takes_argument", &self.takes_argument)
            .finish()
    }
}

fn preserve(dim: usize) -> usize {
    dim
}

fn to_scalar(_: usize) -> usize {
    1
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error("unknown functor '{0}'")]
    UnknownFunctor(String),
    #[error("chain has {len} functors, limit is {max}")]
    TooLong { len: usize, max: usize },
    #[error("functor '{functor}' got {got} arguments for feature dimension {dim}")]
    ArgumentCount {
        functor: String,
        got: usize,
        dim: usize,
    },
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("input feature dimension {0} outside 1..=4")]
    InputDim(usize),
    #[error("functor '{0}' is already registered")]
    DuplicateFunctor(String),
    #[error("functor '{name}' lacks an evaluator for dimension {dim}")]
    MissingVariant { name: String, dim: usize },
    #[error("functor '{name}' maps dimension {from} to {to}")]
    BadDomainMap { name: String, from: usize, to: usize },
}

struct FunctorEntry<S> {
    descriptor: FunctorDescriptor,
    evaluators: [Evaluator<S>; 4],
}

/// Functors available to the chain parser.
pub struct FunctorRegistry<S> {
    entries: Vec<FunctorEntry<S>>,
}

impl<S: Scalar> FunctorRegistry<S> {
    pub fn empty() -> Self {
        Self {
            entries: Vec::new(),
        }
    }

    /// Registry with the predefined `add`, `mul`, `length`, `sum` and `pow`.
    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        reg.register_uniform("add", true, preserve, |x, v| {
            zip_with(x, v.expect("argument"), |a, b| a + b)
        });
        reg.register_uniform("mul", true, preserve, |x, v| {
            zip_with(x, v.expect("argument"), |a, b| a * b)
        });
        reg.register_uniform("length", false, to_scalar, |x, _| {
            let mut acc = S::zero();
            for &c in x.as_slice() {
                acc += c * c;
            }
            FieldVector::scalar(acc.sqrt())
        });
        reg.register_uniform("sum", false, to_scalar, |x, _| {
            let mut acc = S::zero();
            for &c in x.as_slice() {
                acc += c;
            }
            FieldVector::scalar(acc)
        });
        // Negative base with fractional exponent yields NaN, which classifies as transparent.
        reg.register_uniform("pow", true, preserve, |x, v| {
            zip_with(x, v.expect("argument"), |a, b| a.powf(b))
        });
        reg
    }

    fn register_uniform(
        &mut self,
        name: &str,
        takes_argument: bool,
        domain_map: fn(usize) -> usize,
        f: impl Fn(&FieldVector<S>, Option<&FieldVector<S>>) -> FieldVector<S> + Send + Sync + 'static,
    ) {
        let f: Evaluator<S> = Arc::new(f);
        self.register(
            FunctorDescriptor {
                name: name.to_string(),
                takes_argument,
                domain_map,
            },
            [Some(f.clone()), Some(f.clone()), Some(f.clone()), Some(f)],
        )
        .expect("builtin functor registration");
    }

    /// Adds a functor. `evaluators[d - 1]` handles input dimension `d`; all four are required.
    pub fn register(
        &mut self,
        descriptor: FunctorDescriptor,
        evaluators: [Option<Evaluator<S>>; 4],
    ) -> Result<(), ChainError> {
        if self.find(&descriptor.name).is_some() {
            return Err(ChainError::DuplicateFunctor(descriptor.name));
        }
        for dim in 1..=4 {
            let to = (descriptor.domain_map)(dim);
            if !(1..=4).contains(&to) {
                return Err(ChainError::BadDomainMap {
                    name: descriptor.name,
                    from: dim,
                    to,
                });
            }
        }
        let [a, b, c, d] = evaluators;
        let evaluators = match (a, b, c, d) {
            (Some(a), Some(b), Some(c), Some(d)) => [a, b, c, d],
            (a, b, c, _) => {
                let dim = [a.is_none(), b.is_none(), c.is_none()]
                    .iter()
                    .position(|&missing| missing)
                    .map_or(4, |i| i + 1);
                return Err(ChainError::MissingVariant {
                    name: descriptor.name,
                    dim,
                });
            }
        };
        self.entries.push(FunctorEntry {
            descriptor,
            evaluators,
        });
        Ok(())
    }

    fn find(&self, name: &str) -> Option<&FunctorEntry<S>> {
        self.entries.iter().find(|e| e.descriptor.name == name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.descriptor.name.as_str())
    }

    pub fn limits(&self, max_length: usize) -> ChainLimits {
        ChainLimits {
            max_length,
            functor_count: self.entries.len(),
        }
    }
}

fn zip_with<S: Scalar>(x: &FieldVector<S>, v: &FieldVector<S>, f: impl Fn(S, S) -> S) -> FieldVector<S> {
    let mut out = *x;
    for (o, &b) in out.as_mut_slice().iter_mut().zip(v.as_slice()) {
        *o = f(*o, b);
    }
    out
}

/// Chain length limit together with the number of registered functors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainLimits {
    pub max_length: usize,
    pub functor_count: usize,
}

impl ChainLimits {
    /// `4 * f^c`: how many fused chain variants a precompiling implementation would need.
    /// Diagnostic only. `None` on overflow.
    pub fn combination_count(&self) -> Option<u128> {
        (self.functor_count as u128)
            .checked_pow(self.max_length as u32)
            .and_then(|n| n.checked_mul(4))
    }
}

#[derive(Clone)]
struct ChainStep<S> {
    name: String,
    argument: Option<FieldVector<S>>,
    evaluator: Evaluator<S>,
    output_dim: usize,
}

/// A parsed, dimension-checked chain. Immutable and safe to share across workers.
#[derive(Clone)]
pub struct FunctorChain<S> {
    steps: Vec<ChainStep<S>>,
    input_dim: usize,
    output_dim: usize,
}

impl<S: Scalar> fmt::Debug for FunctorChain<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FunctorChain({}: {} -> {})", self, self.input_dim, self.output_dim)
    }
}

impl<S: Scalar> fmt::Display for FunctorChain<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, step) in self.steps.iter().enumerate() {
            if i > 0 {
                f.write_str(" | ")?;
            }
            f.write_str(&step.name)?;
            if let Some(arg) = &step.argument {
                let parts: Vec<String> = arg.as_slice().iter().map(|v| format!("{v:?}")).collect();
                write!(f, "({})", parts.join(","))?;
            }
        }
        Ok(())
    }
}

impl<S: Scalar> FunctorChain<S> {
    pub fn identity(input_dim: usize) -> Self {
        Self {
            steps: Vec::new(),
            input_dim,
            output_dim: input_dim,
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    /// Applies the steps left to right.
    #[inline]
    pub fn eval(&self, value: &FieldVector<S>) -> FieldVector<S> {
        debug_assert_eq!(value.dim(), self.input_dim);
        let mut v = *value;
        for step in &self.steps {
            v = (step.evaluator)(&v, step.argument.as_ref());
            debug_assert_eq!(v.dim(), step.output_dim, "functor {} broke its domain map", step.name);
        }
        debug_assert_eq!(v.dim(), self.output_dim);
        v
    }

    /// `eval` followed by the default scalar reduction.
    #[inline]
    pub fn eval_scalar(&self, value: &FieldVector<S>) -> S {
        reduce_to_scalar(&self.eval(value))
    }
}

/// Classification input of a vector: its first component.
#[inline]
pub fn reduce_to_scalar<S: Scalar>(value: &FieldVector<S>) -> S {
    value.as_slice()[0]
}

/// Parses `text` into a chain for sources of feature dimension `input_dim`.
/// Blank text yields the identity chain.
pub fn parse_chain<S: Scalar>(
    text: &str,
    registry: &FunctorRegistry<S>,
    limits: &ChainLimits,
    input_dim: usize,
) -> Result<FunctorChain<S>, ChainError> {
    if !(1..=4).contains(&input_dim) {
        return Err(ChainError::InputDim(input_dim));
    }
    let calls = Parser::new(text).chain()?;
    if calls.len() > limits.max_length {
        return Err(ChainError::TooLong {
            len: calls.len(),
            max: limits.max_length,
        });
    }
    let mut dim = input_dim;
    let mut steps = Vec::with_capacity(calls.len());
    for call in calls {
        let entry = registry
            .find(&call.name)
            .ok_or_else(|| ChainError::UnknownFunctor(call.name.clone()))?;
        let argument = match (entry.descriptor.takes_argument, call.args.len()) {
            (false, 0) => None,
            (true, 1) => Some(FieldVector::splat(dim, S::lit(call.args[0]))),
            (true, n) if n == dim => {
                let values: Vec<S> = call.args.iter().map(|&a| S::lit(a)).collect();
                Some(FieldVector::new(&values))
            }
            (_, got) => {
                return Err(ChainError::ArgumentCount {
                    functor: call.name,
                    got,
                    dim,
                })
            }
        };
        let output_dim = (entry.descriptor.domain_map)(dim);
        steps.push(ChainStep {
            name: call.name,
            argument,
            evaluator: entry.evaluators[dim - 1].clone(),
            output_dim,
        });
        dim = output_dim;
    }
    Ok(FunctorChain {
        steps,
        input_dim,
        output_dim: dim,
    })
}

struct Call {
    name: String,
    args: Vec<f64>,
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Self { src, pos: 0 }
    }

    fn err(&self, msg: impl Into<String>) -> ChainError {
        ChainError::Syntax {
            pos: self.pos,
            msg: msg.into(),
        }
    }

    fn skip_ws(&mut self) {
        let rest = &self.src[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn chain(&mut self) -> Result<Vec<Call>, ChainError> {
        self.skip_ws();
        if self.pos == self.src.len() {
            return Ok(Vec::new());
        }
        let mut calls = vec![self.call()?];
        while self.eat('|') {
            calls.push(self.call()?);
        }
        self.skip_ws();
        if self.pos != self.src.len() {
            return Err(self.err("expected '|' or end of chain"));
        }
        Ok(calls)
    }

    fn take_while(&mut self, pred: impl Fn(char) -> bool) -> &'a str {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if !pred(c) {
                break;
            }
            self.pos += c.len_utf8();
        }
        &self.src[start..self.pos]
    }

    fn call(&mut self) -> Result<Call, ChainError> {
        self.skip_ws();
        let name = self.take_while(|c| c.is_ascii_alphanumeric() || c == '_');
        if name.is_empty() || name.starts_with(|c: char| c.is_ascii_digit()) {
            return Err(self.err("expected functor name"));
        }
        let name = name.to_string();
        let mut args = Vec::new();
        if self.eat('(') {
            loop {
                self.skip_ws();
                let start = self.pos;
                let tok = self.take_while(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E'));
                let value: f64 = tok.parse().map_err(|_| ChainError::Syntax {
                    pos: start,
                    msg: format!("invalid number '{tok}'"),
                })?;
                args.push(value);
                if self.eat(')') {
                    break;
                }
                if !self.eat(',') {
                    return Err(self.err("expected ',' or ')'"));
                }
            }
        }
        Ok(Call { name, args })
    }
}
