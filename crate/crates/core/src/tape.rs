//! Minimal reverse-mode automatic differentiation over dense matrices.
//!
//! Every value on the tape is an `Array2<f64>`; scalars are `1×1`. Build an
//! expression with the methods on [`Tape`], then call [`Tape::backward`]
//! on a scalar output to get the gradient of every recorded node.
//!
//! ```
//! use ndarray::array;
//! use segcl::tape::Tape;
//!
//! let mut tape = Tape::new();
//! let a = tape.leaf(array![[1.0, 2.0]]);
//! let b = tape.leaf(array![[3.0, 5.0]]);
//! let d = tape.row_sq_dist(a, b); // (1-3)^2 + (2-5)^2
//! let loss = tape.mean(d);
//! assert_eq!(tape.scalar(loss), 13.0);
//! let grads = tape.backward(loss);
//! assert_eq!(grads.get(a).unwrap(), &array![[-4.0, -6.0]]);
//! ```

use ndarray::{concatenate, s, Array2, Axis, Zip};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// constant · x
    LeftMul(Array2<f64>, Var),
    /// x + row broadcast of a `1×d` bias
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    LeakyRelu(Var, f64),
    Relu(Var),
    /// elementwise product with a constant
    MulConst(Var, Array2<f64>),
    ConcatCols(Var, Var),
    GatherRows(Var, Vec<usize>),
    MeanOfRows(Var, Vec<usize>),
    /// per-row squared distance; the second operand may be `1×d`
    RowSqDist(Var, Var),
    Mean(Var),
    SumSquares(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Array2<f64>,
    op: Op,
}

#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one scalar output with respect to every tape node.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    /// `None` when the node does not influence the output.
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of `v`, zeros when the node does not influence the output.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Array2<f64> {
        self.grads[v.0]
            .clone()
            .unwrap_or_else(|| Array2::zeros(shape))
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let value = self.value(v);
        debug_assert_eq!(value.dim(), (1, 1));
        value[[0, 0]]
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    pub fn left_mul(&mut self, c: Array2<f64>, x: Var) -> Var {
        let value = c.dot(self.value(x));
        self.push(value, Op::LeftMul(c, x))
    }

    pub fn add_row(&mut self, x: Var, bias: Var) -> Var {
        let value = self.value(x) + self.value(bias);
        self.push(value, Op::AddRow(x, bias))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        self.push(value, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) - self.value(b);
        self.push(value, Op::Sub(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a) * c;
        self.push(value, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a) + c;
        self.push(value, Op::AddScalar(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(sigmoid);
        self.push(value, Op::Sigmoid(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let value = self.value(a).mapv(|x| if x > 0.0 { x } else { slope * x });
        self.push(value, Op::LeakyRelu(a, slope))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| x.max(0.0));
        self.push(value, Op::Relu(a))
    }

    pub fn mul_const(&mut self, a: Var, c: Array2<f64>) -> Var {
        let value = self.value(a) * &c;
        self.push(value, Op::MulConst(a, c))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let value = concatenate(Axis(1), &[self.value(a).view(), self.value(b).view()])
            .expect("row counts agree");
        self.push(value, Op::ConcatCols(a, b))
    }

    pub fn gather_rows(&mut self, a: Var, rows: Vec<usize>) -> Var {
        let value = self.value(a).select(Axis(0), &rows);
        self.push(value, Op::GatherRows(a, rows))
    }

    /// `1×d` mean of the selected rows.
    pub fn mean_of_rows(&mut self, a: Var, rows: Vec<usize>) -> Var {
        let value = self
            .value(a)
            .select(Axis(0), &rows)
            .mean_axis(Axis(0))
            .expect("at least one row")
            .insert_axis(Axis(0));
        self.push(value, Op::MeanOfRows(a, rows))
    }

    /// `n×1` squared Euclidean distances between rows of `a` and rows of
    /// `b` (or the single row of `b`).
    pub fn row_sq_dist(&mut self, a: Var, b: Var) -> Var {
        let diff = self.value(a) - self.value(b);
        let value = (&diff * &diff).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(value, Op::RowSqDist(a, b))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let m = self.value(a).mean().unwrap_or(0.0);
        self.push(Array2::from_elem((1, 1), m), Op::Mean(a))
    }

    pub fn sum_squares(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().map(|x| x * x).sum();
        self.push(Array2::from_elem((1, 1), s), Op::SumSquares(a))
    }

    /// Reverse sweep from a `1×1` output.
    pub fn backward(&self, out: Var) -> Gradients {
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[out.0] = Some(Array2::ones(self.value(out).dim()));
        for idx in (0..=out.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::LeftMul(c, x) => accumulate(&mut grads, *x, c.t().dot(&g)),
                Op::AddRow(x, bias) => {
                    let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads, *bias, gb);
                    accumulate(&mut grads, *x, g.clone());
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, -&g);
                }
                Op::Scale(a, c) => accumulate(&mut grads, *a, &g * *c),
                Op::AddScalar(a) => accumulate(&mut grads, *a, g.clone()),
                Op::Sigmoid(a) => {
                    let mut ga = g.clone();
                    Zip::from(&mut ga)
                        .and(&node.value)
                        .for_each(|gv, &y| *gv *= y * (1.0 - y));
                    accumulate(&mut grads, *a, ga);
                }
                Op::LeakyRelu(a, slope) => {
                    let mut ga = g.clone();
                    Zip::from(&mut ga).and(self.value(*a)).for_each(|gv, &x| {
                        if x <= 0.0 {
                            *gv *= slope
                        }
                    });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Relu(a) => {
                    let mut ga = g.clone();
                    Zip::from(&mut ga).and(self.value(*a)).for_each(|gv, &x| {
                        if x <= 0.0 {
                            *gv = 0.0
                        }
                    });
                    accumulate(&mut grads, *a, ga);
                }
                Op::MulConst(a, c) => accumulate(&mut grads, *a, &g * c),
                Op::ConcatCols(a, b) => {
                    let split = self.value(*a).ncols();
                    accumulate(&mut grads, *a, g.slice(s![.., ..split]).to_owned());
                    accumulate(&mut grads, *b, g.slice(s![.., split..]).to_owned());
                }
                Op::GatherRows(a, rows) => {
                    let mut ga = Array2::zeros(self.value(*a).dim());
                    for (r, &src) in rows.iter().enumerate() {
                        let mut dst = ga.row_mut(src);
                        dst += &g.row(r);
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::MeanOfRows(a, rows) => {
                    let mut ga = Array2::zeros(self.value(*a).dim());
                    let w = 1.0 / rows.len() as f64;
                    for &src in rows {
                        let mut dst = ga.row_mut(src);
                        dst.scaled_add(w, &g.row(0));
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::RowSqDist(a, b) => {
                    // d/da = 2 (a - b) scaled by the incoming row gradient
                    let diff = self.value(*a) - self.value(*b);
                    let ga = &diff * &g * 2.0;
                    let gb = if self.value(*b).nrows() == 1 && diff.nrows() != 1 {
                        -ga.sum_axis(Axis(0)).insert_axis(Axis(0))
                    } else {
                        -&ga
                    };
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Mean(a) => {
                    let shape = self.value(*a).dim();
                    let w = g[[0, 0]] / (shape.0 * shape.1) as f64;
                    accumulate(&mut grads, *a, Array2::from_elem(shape, w));
                }
                Op::SumSquares(a) => {
                    let ga = self.value(*a) * (2.0 * g[[0, 0]]);
                    accumulate(&mut grads, *a, ga);
                }
            }
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }
}

fn accumulate(grads: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
    match &mut grads[v.0] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}
