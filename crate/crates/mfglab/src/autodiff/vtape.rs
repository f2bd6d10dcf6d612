//! Reverse-mode tape over small dense vectors.
//!
//! Nodes hold vector values (scalars are length-1 vectors) in a bump arena,
//! so building a graph allocates nothing once the tape has warmed up. The op
//! set is exactly what dense-network losses need: affine maps, Hadamard
//! products, activation derivatives, dots, component extraction and
//! concatenation. Values are computed eagerly; `backward` runs one reverse
//! sweep and leaves adjoints addressable per node.

use super::act::Activation;

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(u32);

#[derive(Debug, Clone, Copy)]
enum Op {
    Leaf,
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Scale(u32, f64),
    /// a + c * b
    AddScaled(u32, u32, f64),
    MatVec { m: u32, x: u32, rows: u32, cols: u32 },
    /// Column `col` of a row-major `rows x cols` matrix node.
    MatCol { m: u32, col: u32, rows: u32, cols: u32 },
    /// Elementwise `order`-th derivative of the activation.
    Act { a: u32, act: Activation, order: u8 },
    Dot(u32, u32),
    Sum(u32),
    /// Elementwise absolute value; subgradient 0 at 0.
    Abs(u32),
    Index(u32, u32),
    /// Parent ids live in `cat_args[start..start+count]`.
    Concat { start: u32, count: u32 },
}

struct Node {
    off: u32,
    len: u32,
    op: Op,
}

#[derive(Default)]
pub struct VTape {
    vals: Vec<f64>,
    adj: Vec<f64>,
    nodes: Vec<Node>,
    cat_args: Vec<u32>,
}

impl VTape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drop all nodes but keep the allocated capacity.
    pub fn reset(&mut self) {
        self.vals.clear();
        self.nodes.clear();
        self.cat_args.clear();
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    #[inline]
    fn off(&self, id: NodeId) -> usize {
        self.nodes[id.0 as usize].off as usize
    }

    #[inline]
    pub fn len_of(&self, id: NodeId) -> usize {
        self.nodes[id.0 as usize].len as usize
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        let n = &self.nodes[id.0 as usize];
        &self.vals[n.off as usize..(n.off + n.len) as usize]
    }

    pub fn scalar_value(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.len_of(id), 1);
        self.vals[self.off(id)]
    }

    /// Adjoint of `id` after a `backward` sweep.
    pub fn adjoint(&self, id: NodeId) -> &[f64] {
        let n = &self.nodes[id.0 as usize];
        &self.adj[n.off as usize..(n.off + n.len) as usize]
    }

    fn push(&mut self, len: usize, op: Op) -> (NodeId, usize) {
        let off = self.vals.len();
        self.vals.resize(off + len, 0.0);
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node {
            off: off as u32,
            len: len as u32,
            op,
        });
        (id, off)
    }

    pub fn leaf(&mut self, values: &[f64]) -> NodeId {
        let (id, off) = self.push(values.len(), Op::Leaf);
        self.vals[off..off + values.len()].copy_from_slice(values);
        id
    }

    pub fn scalar(&mut self, v: f64) -> NodeId {
        self.leaf(&[v])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let n = self.len_of(a);
        assert_eq!(n, self.len_of(b), "add: length mismatch");
        let (ao, bo) = (self.off(a), self.off(b));
        let (id, off) = self.push(n, Op::Add(a.0, b.0));
        for k in 0..n {
            self.vals[off + k] = self.vals[ao + k] + self.vals[bo + k];
        }
        id
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let n = self.len_of(a);
        assert_eq!(n, self.len_of(b), "sub: length mismatch");
        let (ao, bo) = (self.off(a), self.off(b));
        let (id, off) = self.push(n, Op::Sub(a.0, b.0));
        for k in 0..n {
            self.vals[off + k] = self.vals[ao + k] - self.vals[bo + k];
        }
        id
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let n = self.len_of(a);
        assert_eq!(n, self.len_of(b), "mul: length mismatch");
        let (ao, bo) = (self.off(a), self.off(b));
        let (id, off) = self.push(n, Op::Mul(a.0, b.0));
        for k in 0..n {
            self.vals[off + k] = self.vals[ao + k] * self.vals[bo + k];
        }
        id
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let n = self.len_of(a);
        let ao = self.off(a);
        let (id, off) = self.push(n, Op::Scale(a.0, c));
        for k in 0..n {
            self.vals[off + k] = c * self.vals[ao + k];
        }
        id
    }

    /// `a + c * b`
    pub fn add_scaled(&mut self, a: NodeId, b: NodeId, c: f64) -> NodeId {
        let n = self.len_of(a);
        assert_eq!(n, self.len_of(b), "add_scaled: length mismatch");
        let (ao, bo) = (self.off(a), self.off(b));
        let (id, off) = self.push(n, Op::AddScaled(a.0, b.0, c));
        for k in 0..n {
            self.vals[off + k] = self.vals[ao + k] + c * self.vals[bo + k];
        }
        id
    }

    /// Row-major `rows x cols` matrix node times a `cols` vector node.
    pub fn matvec(&mut self, m: NodeId, rows: usize, cols: usize, x: NodeId) -> NodeId {
        assert_eq!(self.len_of(m), rows * cols, "matvec: bad matrix node");
        assert_eq!(self.len_of(x), cols, "matvec: bad vector node");
        let (mo, xo) = (self.off(m), self.off(x));
        let (id, off) = self.push(
            rows,
            Op::MatVec {
                m: m.0,
                x: x.0,
                rows: rows as u32,
                cols: cols as u32,
            },
        );
        let (lo, hi) = self.vals.split_at_mut(off);
        let mm = &lo[mo..mo + rows * cols];
        let xx = &lo[xo..xo + cols];
        for (i, out) in hi[..rows].iter_mut().enumerate() {
            let row = &mm[i * cols..(i + 1) * cols];
            *out = row.iter().zip(xx).map(|(a, b)| a * b).sum();
        }
        id
    }

    pub fn mat_col(&mut self, m: NodeId, rows: usize, cols: usize, col: usize) -> NodeId {
        assert_eq!(self.len_of(m), rows * cols, "mat_col: bad matrix node");
        assert!(col < cols);
        let mo = self.off(m);
        let (id, off) = self.push(
            rows,
            Op::MatCol {
                m: m.0,
                col: col as u32,
                rows: rows as u32,
                cols: cols as u32,
            },
        );
        for i in 0..rows {
            self.vals[off + i] = self.vals[mo + i * cols + col];
        }
        id
    }

    /// Elementwise `order`-th derivative of `act`. Orders above 2 are
    /// rejected here because the reverse sweep would need a fourth
    /// derivative.
    pub fn act(&mut self, a: NodeId, act: Activation, order: u8) -> NodeId {
        assert!(order <= 2, "act: order {order} not differentiable on tape");
        let n = self.len_of(a);
        let ao = self.off(a);
        let (id, off) = self.push(n, Op::Act { a: a.0, act, order });
        for k in 0..n {
            self.vals[off + k] = act.eval(self.vals[ao + k], order);
        }
        id
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let n = self.len_of(a);
        assert_eq!(n, self.len_of(b), "dot: length mismatch");
        let (ao, bo) = (self.off(a), self.off(b));
        let (id, off) = self.push(1, Op::Dot(a.0, b.0));
        self.vals[off] = (0..n).map(|k| self.vals[ao + k] * self.vals[bo + k]).sum();
        id
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let n = self.len_of(a);
        let ao = self.off(a);
        let (id, off) = self.push(1, Op::Sum(a.0));
        self.vals[off] = self.vals[ao..ao + n].iter().sum();
        id
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        let n = self.len_of(a);
        let ao = self.off(a);
        let (id, off) = self.push(n, Op::Abs(a.0));
        for k in 0..n {
            self.vals[off + k] = self.vals[ao + k].abs();
        }
        id
    }

    pub fn index(&mut self, a: NodeId, i: usize) -> NodeId {
        assert!(i < self.len_of(a));
        let ao = self.off(a);
        let (id, off) = self.push(1, Op::Index(a.0, i as u32));
        self.vals[off] = self.vals[ao + i];
        id
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let start = self.cat_args.len() as u32;
        self.cat_args.extend(parts.iter().map(|p| p.0));
        let total: usize = parts.iter().map(|p| self.len_of(*p)).sum();
        let offs: Vec<(usize, usize)> = parts.iter().map(|p| (self.off(*p), self.len_of(*p))).collect();
        let (id, off) = self.push(
            total,
            Op::Concat {
                start,
                count: parts.len() as u32,
            },
        );
        let mut cur = off;
        for (po, pl) in offs {
            for k in 0..pl {
                self.vals[cur + k] = self.vals[po + k];
            }
            cur += pl;
        }
        id
    }

    /// Reverse sweep from a scalar root. Adjoints of all nodes are zeroed
    /// and then accumulated; read them with [`VTape::adjoint`].
    pub fn backward(&mut self, root: NodeId) {
        assert_eq!(self.len_of(root), 1, "backward: root must be scalar");
        self.adj.clear();
        self.adj.resize(self.vals.len(), 0.0);
        let root_off = self.off(root);
        self.adj[root_off] = 1.0;

        for ni in (0..=root.0 as usize).rev() {
            let node = &self.nodes[ni];
            let out_off = node.off as usize;
            let out_len = node.len as usize;
            let op = node.op;
            let (lo_adj, hi_adj) = self.adj.split_at_mut(out_off);
            let oa = &hi_adj[..out_len];
            match op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    let (ao, bo) = (self.nodes[a as usize].off as usize, self.nodes[b as usize].off as usize);
                    for k in 0..out_len {
                        lo_adj[ao + k] += oa[k];
                    }
                    for k in 0..out_len {
                        lo_adj[bo + k] += oa[k];
                    }
                }
                Op::Sub(a, b) => {
                    let (ao, bo) = (self.nodes[a as usize].off as usize, self.nodes[b as usize].off as usize);
                    for k in 0..out_len {
                        lo_adj[ao + k] += oa[k];
                    }
                    for k in 0..out_len {
                        lo_adj[bo + k] -= oa[k];
                    }
                }
                Op::Mul(a, b) => {
                    let (ao, bo) = (self.nodes[a as usize].off as usize, self.nodes[b as usize].off as usize);
                    for k in 0..out_len {
                        lo_adj[ao + k] += oa[k] * self.vals[bo + k];
                    }
                    for k in 0..out_len {
                        lo_adj[bo + k] += oa[k] * self.vals[ao + k];
                    }
                }
                Op::Scale(a, c) => {
                    let ao = self.nodes[a as usize].off as usize;
                    for k in 0..out_len {
                        lo_adj[ao + k] += c * oa[k];
                    }
                }
                Op::AddScaled(a, b, c) => {
                    let (ao, bo) = (self.nodes[a as usize].off as usize, self.nodes[b as usize].off as usize);
                    for k in 0..out_len {
                        lo_adj[ao + k] += oa[k];
                    }
                    for k in 0..out_len {
                        lo_adj[bo + k] += c * oa[k];
                    }
                }
                Op::MatVec { m, x, rows, cols } => {
                    let (rows, cols) = (rows as usize, cols as usize);
                    let mo = self.nodes[m as usize].off as usize;
                    let xo = self.nodes[x as usize].off as usize;
                    for i in 0..rows {
                        let g = oa[i];
                        if g == 0.0 {
                            continue;
                        }
                        let row_val = &self.vals[mo + i * cols..mo + (i + 1) * cols];
                        for j in 0..cols {
                            lo_adj[mo + i * cols + j] += g * self.vals[xo + j];
                            lo_adj[xo + j] += g * row_val[j];
                        }
                    }
                }
                Op::MatCol { m, col, rows, cols } => {
                    let (rows, cols, col) = (rows as usize, cols as usize, col as usize);
                    let mo = self.nodes[m as usize].off as usize;
                    for i in 0..rows {
                        lo_adj[mo + i * cols + col] += oa[i];
                    }
                }
                Op::Act { a, act, order } => {
                    let ao = self.nodes[a as usize].off as usize;
                    for k in 0..out_len {
                        lo_adj[ao + k] += oa[k] * act.eval(self.vals[ao + k], order + 1);
                    }
                }
                Op::Dot(a, b) => {
                    let (ao, bo) = (self.nodes[a as usize].off as usize, self.nodes[b as usize].off as usize);
                    let n = self.nodes[a as usize].len as usize;
                    let g = oa[0];
                    for k in 0..n {
                        lo_adj[ao + k] += g * self.vals[bo + k];
                    }
                    for k in 0..n {
                        lo_adj[bo + k] += g * self.vals[ao + k];
                    }
                }
                Op::Sum(a) => {
                    let ao = self.nodes[a as usize].off as usize;
                    let n = self.nodes[a as usize].len as usize;
                    let g = oa[0];
                    for k in 0..n {
                        lo_adj[ao + k] += g;
                    }
                }
                Op::Abs(a) => {
                    let ao = self.nodes[a as usize].off as usize;
                    for k in 0..out_len {
                        let v = self.vals[ao + k];
                        let s = if v > 0.0 {
                            1.0
                        } else if v < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                        lo_adj[ao + k] += s * oa[k];
                    }
                }
                Op::Index(a, i) => {
                    let ao = self.nodes[a as usize].off as usize;
                    lo_adj[ao + i as usize] += oa[0];
                }
                Op::Concat { start, count } => {
                    let mut cur = 0usize;
                    for pi in 0..count as usize {
                        let p = self.cat_args[start as usize + pi] as usize;
                        let po = self.nodes[p].off as usize;
                        let pl = self.nodes[p].len as usize;
                        for k in 0..pl {
                            lo_adj[po + k] += oa[cur + k];
                        }
                        cur += pl;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// d/dx of sum(|W x|^2 components) checked against finite differences.
    #[test]
    fn matvec_quadratic_gradient() {
        let w = [1.0, -2.0, 0.5, 3.0, 0.0, -1.0];
        let x = [0.4, -0.7];
        let f = |xv: &[f64]| -> f64 {
            let mut t = VTape::new();
            let wn = t.leaf(&w);
            let xn = t.leaf(xv);
            let y = t.matvec(wn, 3, 2, xn);
            let s = t.dot(y, y);
            t.scalar_value(s)
        };
        let mut t = VTape::new();
        let wn = t.leaf(&w);
        let xn = t.leaf(&x);
        let y = t.matvec(wn, 3, 2, xn);
        let s = t.dot(y, y);
        t.backward(s);
        let g = t.adjoint(xn).to_vec();
        let h = 1e-6;
        for k in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            let fd = (f(&xp) - f(&xm)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-7, "coord {k}: fd {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn shared_parent_accumulates_both_sides() {
        // d/da (a . a) = 2a
        let mut t = VTape::new();
        let a = t.leaf(&[1.5, -2.0]);
        let s = t.dot(a, a);
        t.backward(s);
        assert_eq!(t.adjoint(a), &[3.0, -4.0]);
    }

    #[test]
    fn act_chain_through_second_derivative() {
        // root = gelu''(w * x) as a function of w; checked by finite differences
        let act = Activation::Gelu;
        let f = |w: f64| -> f64 {
            let mut t = VTape::new();
            let wn = t.leaf(&[w]);
            let xn = t.leaf(&[0.8]);
            let z = t.mul(wn, xn);
            let y = t.act(z, act, 2);
            t.scalar_value(y)
        };
        let mut t = VTape::new();
        let wn = t.leaf(&[1.3]);
        let xn = t.leaf(&[0.8]);
        let z = t.mul(wn, xn);
        let y = t.act(z, act, 2);
        t.backward(y);
        let g = t.adjoint(wn)[0];
        let h = 1e-6;
        let fd = (f(1.3 + h) - f(1.3 - h)) / (2.0 * h);
        assert!((fd - g).abs() < 1e-8, "fd {fd} vs {g}");
    }

    #[test]
    fn abs_subgradient_zero_at_zero() {
        let mut t = VTape::new();
        let a = t.leaf(&[0.0]);
        let b = t.abs(a);
        t.backward(b);
        assert_eq!(t.adjoint(a), &[0.0]);
    }

    #[test]
    fn concat_routes_adjoints() {
        let mut t = VTape::new();
        let a = t.leaf(&[1.0]);
        let b = t.leaf(&[2.0, 3.0]);
        let c = t.concat(&[a, b]);
        let w = t.leaf(&[2.0, -1.0, 4.0]);
        let s = t.dot(c, w);
        t.backward(s);
        assert_eq!(t.adjoint(a), &[2.0]);
        assert_eq!(t.adjoint(b), &[-1.0, 4.0]);
    }
}
