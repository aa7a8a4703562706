//! Sparse LU factorisation of a simplex basis.
//!
//! Left-looking (Gilbert-Peierls) elimination with threshold partial
//! pivoting, preferring sparse rows among numerically acceptable pivots.
//! Basis changes between refactorisations are appended as product-form
//! eta columns.

const NONE: usize = usize::MAX;
const THRESHOLD: f64 = 0.1;
const DROP: f64 = 1e-14;

/// Basis positions whose columns were numerically dependent, paired with
/// rows that never received a pivot.
#[derive(Debug, Clone)]
pub(crate) struct Singular {
    pub positions: Vec<usize>,
    pub free_rows: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct LuFactors {
    m: usize,
    prow: Vec<usize>,
    qcol: Vec<usize>,
    l_start: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    u_start: Vec<usize>,
    u_idx: Vec<usize>,
    u_val: Vec<f64>,
    u_diag: Vec<f64>,
    eta_pos: Vec<usize>,
    eta_piv: Vec<f64>,
    eta_start: Vec<usize>,
    eta_idx: Vec<usize>,
    eta_val: Vec<f64>,
    work: Vec<f64>,
}

impl LuFactors {
    /// Factorises the `m x m` matrix whose column `p` is `cols[p]` (row, value pairs).
    pub fn factorize(m: usize, cols: &[Vec<(usize, f64)>], pivot_zero: f64) -> Result<Self, Singular> {
        debug_assert_eq!(cols.len(), m);
        let mut row_count = vec![0usize; m];
        for col in cols {
            for &(i, _) in col {
                row_count[i] += 1;
            }
        }
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by_key(|&p| (cols[p].len(), p));

        let mut f = LuFactors {
            m,
            prow: Vec::with_capacity(m),
            qcol: Vec::with_capacity(m),
            l_start: vec![0],
            u_start: vec![0],
            u_diag: Vec::with_capacity(m),
            eta_start: vec![0],
            work: vec![0.0; m],
            ..Default::default()
        };
        let mut pinv = vec![NONE; m];
        let mut x = vec![0.0; m];
        let mut mark = vec![0u32; m];
        let mut stamp = 0u32;
        let mut topo: Vec<usize> = Vec::new();
        let mut stack: Vec<(usize, usize)> = Vec::new();
        let mut singular = Vec::new();

        for &p in &order {
            stamp += 1;
            topo.clear();
            // symbolic: reach of the column's pattern in the graph of L
            for &(start, _) in &cols[p] {
                if mark[start] == stamp {
                    continue;
                }
                mark[start] = stamp;
                stack.push((start, 0));
                while let Some(top) = stack.len().checked_sub(1) {
                    let (node, child) = stack[top];
                    let k = pinv[node];
                    let (lo, hi) = if k == NONE { (0, 0) } else { (f.l_start[k], f.l_start[k + 1]) };
                    if lo + child < hi {
                        let next = f.l_idx[lo + child];
                        stack[top].1 += 1;
                        if mark[next] != stamp {
                            mark[next] = stamp;
                            stack.push((next, 0));
                        }
                    } else {
                        topo.push(node);
                        stack.pop();
                    }
                }
            }
            // numeric: x = L \ column, in topological order
            for &(i, v) in &cols[p] {
                x[i] = v;
            }
            for &i in topo.iter().rev() {
                let k = pinv[i];
                if k == NONE {
                    continue;
                }
                let xi = x[i];
                if xi == 0.0 {
                    continue;
                }
                for e in f.l_start[k]..f.l_start[k + 1] {
                    x[f.l_idx[e]] -= f.l_val[e] * xi;
                }
            }
            let mut amax = 0.0f64;
            for &i in &topo {
                if pinv[i] == NONE {
                    amax = amax.max(x[i].abs());
                }
            }
            if amax <= pivot_zero {
                singular.push(p);
                for &i in &topo {
                    x[i] = 0.0;
                }
                continue;
            }
            let mut ipiv = NONE;
            for &i in &topo {
                if pinv[i] != NONE || x[i].abs() < THRESHOLD * amax {
                    continue;
                }
                if ipiv == NONE
                    || row_count[i] < row_count[ipiv]
                    || (row_count[i] == row_count[ipiv] && x[i].abs() > x[ipiv].abs())
                {
                    ipiv = i;
                }
            }
            let k = f.prow.len();
            let piv = x[ipiv];
            for &i in &topo {
                let v = x[i];
                x[i] = 0.0;
                if v.abs() <= DROP || i == ipiv {
                    continue;
                }
                if pinv[i] != NONE {
                    f.u_idx.push(pinv[i]);
                    f.u_val.push(v);
                } else {
                    f.l_idx.push(i);
                    f.l_val.push(v / piv);
                }
            }
            pinv[ipiv] = k;
            f.prow.push(ipiv);
            f.qcol.push(p);
            f.u_diag.push(piv);
            f.l_start.push(f.l_idx.len());
            f.u_start.push(f.u_idx.len());
        }

        if !singular.is_empty() {
            let free_rows = (0..m).filter(|&i| pinv[i] == NONE).collect();
            return Err(Singular { positions: singular, free_rows });
        }
        Ok(f)
    }

    pub fn num_etas(&self) -> usize {
        self.eta_pos.len()
    }

    /// Records that basis position `r` was replaced by a column whose
    /// transformed representation (`B^-1 a`) is `alpha`.
    pub fn push_eta(&mut self, r: usize, alpha: &[f64]) {
        self.eta_pos.push(r);
        self.eta_piv.push(alpha[r]);
        for (i, &a) in alpha.iter().enumerate() {
            if i != r && a.abs() > DROP {
                self.eta_idx.push(i);
                self.eta_val.push(a);
            }
        }
        self.eta_start.push(self.eta_idx.len());
    }

    /// Solves `B z = b`. Input is indexed by row, output by basis position.
    pub fn ftran(&mut self, b: &mut [f64]) {
        let m = self.m;
        for k in 0..m {
            let v = b[self.prow[k]];
            if v == 0.0 {
                continue;
            }
            for e in self.l_start[k]..self.l_start[k + 1] {
                b[self.l_idx[e]] -= self.l_val[e] * v;
            }
        }
        let w = &mut self.work;
        for k in 0..m {
            w[k] = b[self.prow[k]];
        }
        for k in (0..m).rev() {
            if w[k] == 0.0 {
                continue;
            }
            w[k] /= self.u_diag[k];
            let uk = w[k];
            for e in self.u_start[k]..self.u_start[k + 1] {
                w[self.u_idx[e]] -= self.u_val[e] * uk;
            }
        }
        for k in 0..m {
            b[self.qcol[k]] = w[k];
        }
        for t in 0..self.eta_pos.len() {
            let r = self.eta_pos[t];
            if b[r] == 0.0 {
                continue;
            }
            let zr = b[r] / self.eta_piv[t];
            b[r] = zr;
            for e in self.eta_start[t]..self.eta_start[t + 1] {
                b[self.eta_idx[e]] -= self.eta_val[e] * zr;
            }
        }
    }

    /// Solves `B' y = c`. Input is indexed by basis position, output by row.
    pub fn btran(&mut self, c: &mut [f64]) {
        let m = self.m;
        for t in (0..self.eta_pos.len()).rev() {
            let r = self.eta_pos[t];
            let mut s = c[r];
            for e in self.eta_start[t]..self.eta_start[t + 1] {
                s -= self.eta_val[e] * c[self.eta_idx[e]];
            }
            c[r] = s / self.eta_piv[t];
        }
        let w = &mut self.work;
        for k in 0..m {
            let mut s = c[self.qcol[k]];
            for e in self.u_start[k]..self.u_start[k + 1] {
                s -= self.u_val[e] * w[self.u_idx[e]];
            }
            w[k] = s / self.u_diag[k];
        }
        for k in (0..m).rev() {
            let mut s = w[k];
            for e in self.l_start[k]..self.l_start[k + 1] {
                s -= self.l_val[e] * c[self.l_idx[e]];
            }
            c[self.prow[k]] = s;
        }
    }
}
