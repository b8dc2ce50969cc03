use num_complex::Complex;

use super::params::ParamStore;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op<S> {
    Constant,
    Param(String),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine(Var, S),
    PassThrough(Var),
    Relu(Var),
    Log(Var),
    SoftmaxGroups(Var, usize),
    LogSoftmaxGroups(Var, usize),
    GroupDot { x: Var, levels: Vec<S>, positions: usize, groups: usize },
    PowerNorm { x: Var, positions: usize, power: S, per_batch: bool },
    ConcatCols(Var, Var),
    PickCols(Var, Vec<usize>),
    SumAll(Var),
    DistanceSoftmax { x: Var, points: Vec<Complex<S>>, temperature: S },
}

#[derive(Debug, Clone)]
struct Node<S> {
    value: Matrix<S>,
    op: Op<S>,
}

/// Records a forward computation for reverse-mode differentiation.
///
/// Constants (inputs, Gumbel and channel noise) carry no gradient; parameter
/// leaves route their gradient into the [`ParamStore`] they were read from.
#[derive(Debug, Clone, Default)]
pub struct Tape<S> {
    nodes: Vec<Node<S>>,
}

fn shape_err(what: &str, a: (usize, usize), b: (usize, usize)) -> Error {
    Error::Shape(format!("{what}: {a:?} vs {b:?}"))
}

fn softmax_row<S: Scalar>(x: &[S], out: &mut [S]) {
    let max = x.iter().copied().fold(S::neg_infinity(), S::max);
    let mut total = S::zero();
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (v - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    #[inline]
    pub fn value(&self, v: Var) -> &Matrix<S> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Matrix<S>, op: Op<S>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Matrix<S>) -> Var {
        self.push(value, Op::Constant)
    }

    /// Reads parameter `name` from `store`.
    pub fn param(&mut self, store: &ParamStore<S>, name: &str) -> Result<Var> {
        let value = store.value(name)?.clone();
        Ok(self.push(value, Op::Param(name.to_string())))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    /// `x + 1·bias` with `bias` a `1 x cols` row.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(shape_err("add_bias", xv.shape(), bv.shape()));
        }
        let mut out = xv.clone();
        for r in 0..out.rows() {
            for (o, &b) in out.row_mut(r).iter_mut().zip(bv.as_slice()) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddBias(x, bias)))
    }

    fn zip_with(&mut self, a: Var, b: Var, what: &str, f: impl Fn(S, S) -> S, op: Op<S>) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err(what, av.shape(), bv.shape()));
        }
        let data = av.as_slice().iter().zip(bv.as_slice()).map(|(&x, &y)| f(x, y)).collect();
        let value = Matrix::from_vec(av.rows(), av.cols(), data)?;
        Ok(self.push(value, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// `scale * x + offset`, elementwise.
    pub fn affine(&mut self, x: Var, scale: S, offset: S) -> Var {
        let value = self.value(x).map(|v| scale * v + offset);
        self.push(value, Op::Affine(x, scale))
    }

    pub fn scale(&mut self, x: Var, s: S) -> Var {
        self.affine(x, s, S::zero())
    }

    /// `x + c` for a constant matrix `c`.
    pub fn add_const(&mut self, x: Var, c: &Matrix<S>) -> Result<Var> {
        let xv = self.value(x);
        if xv.shape() != c.shape() {
            return Err(shape_err("add_const", xv.shape(), c.shape()));
        }
        let mut value = xv.clone();
        value.add_assign(c);
        Ok(self.push(value, Op::PassThrough(x)))
    }

    /// Value `forward`, gradient routed to `surrogate` unchanged.
    pub fn straight_through(&mut self, forward: Matrix<S>, surrogate: Var) -> Result<Var> {
        if forward.shape() != self.value(surrogate).shape() {
            return Err(shape_err("straight_through", forward.shape(), self.value(surrogate).shape()));
        }
        Ok(self.push(forward, Op::PassThrough(surrogate)))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(S::zero()));
        self.push(value, Op::Relu(x))
    }

    pub fn log(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.ln());
        self.push(value, Op::Log(x))
    }

    fn check_groups(&self, x: Var, group: usize) -> Result<()> {
        let cols = self.value(x).cols();
        if group == 0 || cols % group != 0 {
            return Err(Error::Shape(format!("{cols} columns do not split into groups of {group}")));
        }
        Ok(())
    }

    /// Softmax over each contiguous run of `group` columns.
    pub fn softmax_groups(&mut self, x: Var, group: usize) -> Result<Var> {
        self.check_groups(x, group)?;
        let xv = self.value(x);
        let mut out = Matrix::zeros(xv.rows(), xv.cols());
        for r in 0..xv.rows() {
            for (src, dst) in xv.row(r).chunks(group).zip(out.row_mut(r).chunks_mut(group)) {
                softmax_row(src, dst);
            }
        }
        Ok(self.push(out, Op::SoftmaxGroups(x, group)))
    }

    /// Log-softmax over each contiguous run of `group` columns.
    pub fn log_softmax_groups(&mut self, x: Var, group: usize) -> Result<Var> {
        self.check_groups(x, group)?;
        let xv = self.value(x);
        let mut out = Matrix::zeros(xv.rows(), xv.cols());
        for r in 0..xv.rows() {
            for (src, dst) in xv.row(r).chunks(group).zip(out.row_mut(r).chunks_mut(group)) {
                let max = src.iter().copied().fold(S::neg_infinity(), S::max);
                let lse = max + src.iter().map(|&v| (v - max).exp()).sum::<S>().ln();
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d = s - lse;
                }
            }
        }
        Ok(self.push(out, Op::LogSoftmaxGroups(x, group)))
    }

    /// Dots each category run with `levels`. Input column
    /// `(i * groups + g) * C + m` feeds output column `g * positions + i`.
    pub fn group_dot(&mut self, x: Var, levels: &[S], positions: usize, groups: usize) -> Result<Var> {
        let xv = self.value(x);
        let c = levels.len();
        if xv.cols() != positions * groups * c {
            return Err(Error::Shape(format!(
                "group_dot over {} columns, expected {positions}x{groups}x{c}",
                xv.cols()
            )));
        }
        let mut out = Matrix::zeros(xv.rows(), positions * groups);
        for r in 0..xv.rows() {
            let row = xv.row(r);
            for i in 0..positions {
                for g in 0..groups {
                    let base = (i * groups + g) * c;
                    out[(r, g * positions + i)] =
                        row[base..base + c].iter().zip(levels).map(|(&a, &b)| a * b).sum();
                }
            }
        }
        Ok(self.push(out, Op::GroupDot { x, levels: levels.to_vec(), positions, groups }))
    }

    /// Scales each row (or the whole batch when `per_batch`) so that
    /// `Σ x² / positions = power`.
    pub fn power_normalize(&mut self, x: Var, positions: usize, power: S, per_batch: bool) -> Result<Var> {
        let out = power_normalize_value(self.value(x), positions, power, per_batch)?;
        Ok(self.push(out, Op::PowerNorm { x, positions, power, per_batch }))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rows() != bv.rows() {
            return Err(shape_err("concat_cols", av.shape(), bv.shape()));
        }
        let mut out = Matrix::zeros(av.rows(), av.cols() + bv.cols());
        for r in 0..av.rows() {
            let row = out.row_mut(r);
            row[..av.cols()].copy_from_slice(av.row(r));
            row[av.cols()..].copy_from_slice(bv.row(r));
        }
        Ok(self.push(out, Op::ConcatCols(a, b)))
    }

    /// `out[r] = x[r, idx[r]]`, an `rows x 1` column.
    pub fn pick_cols(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        if idx.len() != xv.rows() {
            return Err(Error::Shape(format!("{} indices for {} rows", idx.len(), xv.rows())));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= xv.cols()) {
            return Err(Error::IndexOutOfRange { index: bad, len: xv.cols() });
        }
        let data = idx.iter().enumerate().map(|(r, &c)| xv[(r, c)]).collect();
        let value = Matrix::from_vec(idx.len(), 1, data)?;
        Ok(self.push(value, Op::PickCols(x, idx.to_vec())))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let value = Matrix::filled(1, 1, self.value(x).sum());
        self.push(value, Op::SumAll(x))
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let n = S::lit(self.value(x).len() as f64);
        let s = self.sum_all(x);
        self.scale(s, S::one() / n)
    }

    /// Soft projection onto `points`: each complex value `v` (columns laid out
    /// `[I.., Q..]`) becomes `Σ_m c_m softmax_m(-|v - c_m|² / T)`.
    pub fn distance_softmax(&mut self, x: Var, points: &[Complex<S>], temperature: S) -> Result<Var> {
        let xv = self.value(x);
        if xv.cols() % 2 != 0 {
            return Err(Error::Shape("distance_softmax needs [I.., Q..] columns".into()));
        }
        let n = xv.cols() / 2;
        let mut out = Matrix::zeros(xv.rows(), xv.cols());
        for r in 0..xv.rows() {
            for i in 0..n {
                let v = Complex::new(xv[(r, i)], xv[(r, n + i)]);
                let w = distance_weights(v, points, temperature);
                let o: Complex<S> = w.iter().zip(points).map(|(&wm, &c)| c * wm).sum();
                out[(r, i)] = o.re;
                out[(r, n + i)] = o.im;
            }
        }
        Ok(self.push(out, Op::DistanceSoftmax { x, points: points.to_vec(), temperature }))
    }

    /// Reverse sweep from the scalar `output`, seeding it with `upstream`.
    /// Parameter gradients are accumulated (added) into `store`.
    pub fn backward(&self, output: Var, upstream: S, store: &mut ParamStore<S>) -> Result<()> {
        if self.nodes.is_empty() || output.0 >= self.nodes.len() || self.value(output).shape() != (1, 1) {
            return Err(Error::NoForward);
        }
        let mut grads: Vec<Option<Matrix<S>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(Matrix::filled(1, 1, upstream));

        fn acc<S: Scalar>(grads: &mut [Option<Matrix<S>>], v: Var, g: Matrix<S>) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot => *slot = Some(g),
            }
        }

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant => {}
                Op::Param(name) => store.accumulate_grad(name, &g)?,
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    acc(&mut grads, *a, g.matmul(&bv.transpose())?);
                    acc(&mut grads, *b, av.transpose().matmul(&g)?);
                }
                Op::AddBias(x, b) => {
                    let mut gb = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, &v) in gb.as_mut_slice().iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    acc(&mut grads, *b, gb);
                    acc(&mut grads, *x, g);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, g.map(|v| -v));
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let ga = zip_map(&g, bv, |x, y| x * y);
                    let gb = zip_map(&g, av, |x, y| x * y);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Affine(x, s) => acc(&mut grads, *x, g.map(|v| v * *s)),
                Op::PassThrough(x) => acc(&mut grads, *x, g),
                Op::Relu(x) => {
                    let gx = zip_map(&g, self.value(*x), |gv, xv| if xv > S::zero() { gv } else { S::zero() });
                    acc(&mut grads, *x, gx);
                }
                Op::Log(x) => acc(&mut grads, *x, zip_map(&g, self.value(*x), |gv, xv| gv / xv)),
                Op::SoftmaxGroups(x, group) => {
                    let y = &node.value;
                    let mut gx = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        for ((yc, gc), oc) in
                            y.row(r).chunks(*group).zip(g.row(r).chunks(*group)).zip(gx.row_mut(r).chunks_mut(*group))
                        {
                            let dot: S = yc.iter().zip(gc).map(|(&a, &b)| a * b).sum();
                            for ((o, &yv), &gv) in oc.iter_mut().zip(yc).zip(gc) {
                                *o = yv * (gv - dot);
                            }
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::LogSoftmaxGroups(x, group) => {
                    let y = &node.value;
                    let mut gx = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        for ((yc, gc), oc) in
                            y.row(r).chunks(*group).zip(g.row(r).chunks(*group)).zip(gx.row_mut(r).chunks_mut(*group))
                        {
                            let total: S = gc.iter().copied().sum();
                            for ((o, &yv), &gv) in oc.iter_mut().zip(yc).zip(gc) {
                                *o = gv - yv.exp() * total;
                            }
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::GroupDot { x, levels, positions, groups } => {
                    let c = levels.len();
                    let mut gx = Matrix::zeros(g.rows(), positions * groups * c);
                    for r in 0..g.rows() {
                        for i in 0..*positions {
                            for gi in 0..*groups {
                                let up = g[(r, gi * positions + i)];
                                let base = (i * groups + gi) * c;
                                for (m, &l) in levels.iter().enumerate() {
                                    gx[(r, base + m)] = up * l;
                                }
                            }
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::PowerNorm { x, positions, power, per_batch } => {
                    let xv = self.value(*x);
                    let target = S::lit(*positions as f64) * *power;
                    let mut gx = Matrix::zeros(xv.rows(), xv.cols());
                    if *per_batch {
                        let b = S::lit(xv.rows() as f64);
                        let s = xv.as_slice().iter().map(|&v| v * v).sum::<S>() / b;
                        let scale = (target / s).sqrt();
                        let gdot: S = g.as_slice().iter().zip(xv.as_slice()).map(|(&a, &b)| a * b).sum();
                        for ((o, &gv), &xval) in gx.as_mut_slice().iter_mut().zip(g.as_slice()).zip(xv.as_slice()) {
                            *o = scale * (gv - xval * gdot / (b * s));
                        }
                    } else {
                        for r in 0..xv.rows() {
                            let xr = xv.row(r);
                            let gr = g.row(r);
                            let s: S = xr.iter().map(|&v| v * v).sum();
                            let scale = (target / s).sqrt();
                            let gdot: S = gr.iter().zip(xr).map(|(&a, &b)| a * b).sum();
                            for ((o, &gv), &xval) in gx.row_mut(r).iter_mut().zip(gr).zip(xr) {
                                *o = scale * (gv - xval * gdot / s);
                            }
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::ConcatCols(a, b) => {
                    let ac = self.value(*a).cols();
                    let bc = self.value(*b).cols();
                    let mut ga = Matrix::zeros(g.rows(), ac);
                    let mut gb = Matrix::zeros(g.rows(), bc);
                    for r in 0..g.rows() {
                        ga.row_mut(r).copy_from_slice(&g.row(r)[..ac]);
                        gb.row_mut(r).copy_from_slice(&g.row(r)[ac..]);
                    }
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::PickCols(x, idx) => {
                    let xv = self.value(*x);
                    let mut gx = Matrix::zeros(xv.rows(), xv.cols());
                    for (r, &c) in idx.iter().enumerate() {
                        gx[(r, c)] = g[(r, 0)];
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::SumAll(x) => {
                    let (rows, cols) = self.value(*x).shape();
                    acc(&mut grads, *x, Matrix::filled(rows, cols, g[(0, 0)]));
                }
                Op::DistanceSoftmax { x, points, temperature } => {
                    let xv = self.value(*x);
                    let y = &node.value;
                    let n = xv.cols() / 2;
                    let two = S::lit(2.0);
                    let mut gx = Matrix::zeros(xv.rows(), xv.cols());
                    for r in 0..xv.rows() {
                        for i in 0..n {
                            let v = Complex::new(xv[(r, i)], xv[(r, n + i)]);
                            let out = Complex::new(y[(r, i)], y[(r, n + i)]);
                            let up = Complex::new(g[(r, i)], g[(r, n + i)]);
                            let w = distance_weights(v, points, *temperature);
                            let mut gv = Complex::new(S::zero(), S::zero());
                            for (&wm, &c) in w.iter().zip(points) {
                                let d = c - out;
                                let inner = up.re * d.re + up.im * d.im;
                                gv = gv - (v - c) * (wm * inner * two / *temperature);
                            }
                            gx[(r, i)] = gv.re;
                            gx[(r, n + i)] = gv.im;
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
            }
        }
        Ok(())
    }
}

fn zip_map<S: Scalar>(a: &Matrix<S>, b: &Matrix<S>, f: impl Fn(S, S) -> S) -> Matrix<S> {
    let data = a.as_slice().iter().zip(b.as_slice()).map(|(&x, &y)| f(x, y)).collect();
    Matrix::from_vec(a.rows(), a.cols(), data).expect("same shape")
}

/// `softmax_m(-|v - c_m|² / T)`.
pub fn distance_weights<S: Scalar>(v: Complex<S>, points: &[Complex<S>], temperature: S) -> Vec<S> {
    let logits: Vec<S> = points.iter().map(|&c| -(v - c).norm_sqr() / temperature).collect();
    let mut w = vec![S::zero(); points.len()];
    softmax_row(&logits, &mut w);
    w
}

/// Value-level power normalization shared by the tape op and plain forward passes.
pub fn power_normalize_value<S: Scalar>(x: &Matrix<S>, positions: usize, power: S, per_batch: bool) -> Result<Matrix<S>> {
    let target = S::lit(positions as f64) * power;
    let mut out = x.clone();
    if per_batch {
        let s = x.as_slice().iter().map(|&v| v * v).sum::<S>() / S::lit(x.rows() as f64);
        if s == S::zero() {
            return Err(Error::ZeroSequence);
        }
        let scale = (target / s).sqrt();
        out.as_mut_slice().iter_mut().for_each(|v| *v *= scale);
    } else {
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let s: S = row.iter().map(|&v| v * v).sum();
            if s == S::zero() {
                return Err(Error::ZeroSequence);
            }
            let scale = (target / s).sqrt();
            row.iter_mut().for_each(|v| *v *= scale);
        }
    }
    Ok(out)
}
