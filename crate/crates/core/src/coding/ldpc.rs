//! Sparse parity-check codes: ALIST I/O, construction, encoding and decoding.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::CodingError;

/// Largest code dimension decoded by exhaustive enumeration instead of BP.
pub const EXHAUSTIVE_MAX_K: usize = 16;

/// Magnitude cap on check-to-variable messages.
const LLR_CAP: f64 = 60.0;

/// Sparse binary parity-check matrix stored by rows and by columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParityCheck {
    pub n: usize,
    /// Column indices of the ones in each row.
    pub rows: Vec<Vec<usize>>,
    /// Row indices of the ones in each column.
    pub cols: Vec<Vec<usize>>,
}

impl ParityCheck {
    pub fn from_rows(n: usize, rows: Vec<Vec<usize>>) -> Result<Self, CodingError> {
        let mut cols = vec![Vec::new(); n];
        for (r, row) in rows.iter().enumerate() {
            for &c in row {
                if c >= n {
                    return Err(CodingError::InvalidCode(format!("row {r} references column {c} >= {n}")));
                }
                if cols[c].contains(&r) {
                    return Err(CodingError::InvalidCode(format!("duplicate entry ({r}, {c})")));
                }
                cols[c].push(r);
            }
        }
        Ok(ParityCheck { n, rows, cols })
    }

    pub fn m(&self) -> usize {
        self.rows.len()
    }

    pub fn syndrome_ok(&self, bits: &[u8]) -> bool {
        self.rows
            .iter()
            .all(|row| row.iter().fold(0u8, |a, &c| a ^ bits[c]) == 0)
    }

    /// Parses the ALIST interchange format.
    pub fn from_alist(text: &str) -> Result<Self, CodingError> {
        let mut nums = text.split_whitespace().map(|t| {
            t.parse::<usize>()
                .map_err(|_| CodingError::Alist(format!("not an integer: {t:?}")))
        });
        let mut next = || nums.next().unwrap_or_else(|| Err(CodingError::Alist("truncated file".into())));
        let n = next()?;
        let m = next()?;
        let max_col = next()?;
        let max_row = next()?;
        let col_deg: Vec<usize> = (0..n).map(|_| next()).collect::<Result<_, _>>()?;
        let row_deg: Vec<usize> = (0..m).map(|_| next()).collect::<Result<_, _>>()?;
        let mut cols = Vec::with_capacity(n);
        for &d in &col_deg {
            let mut entries = Vec::with_capacity(d);
            for i in 0..max_col {
                let v = next()?;
                if i < d {
                    if v == 0 || v > m {
                        return Err(CodingError::Alist(format!("row index {v} out of range")));
                    }
                    entries.push(v - 1);
                } else if v != 0 {
                    return Err(CodingError::Alist("nonzero padding in column list".into()));
                }
            }
            cols.push(entries);
        }
        let mut rows = Vec::with_capacity(m);
        for &d in &row_deg {
            let mut entries = Vec::with_capacity(d);
            for i in 0..max_row {
                let v = next()?;
                if i < d {
                    if v == 0 || v > n {
                        return Err(CodingError::Alist(format!("column index {v} out of range")));
                    }
                    entries.push(v - 1);
                } else if v != 0 {
                    return Err(CodingError::Alist("nonzero padding in row list".into()));
                }
            }
            rows.push(entries);
        }
        let h = ParityCheck::from_rows(n, rows)?;
        let mut check = h.cols.clone();
        for (c, mut listed) in cols.into_iter().enumerate() {
            check[c].sort_unstable();
            listed.sort_unstable();
            if check[c] != listed {
                return Err(CodingError::Alist(format!("column {c} disagrees with row lists")));
            }
        }
        Ok(h)
    }

    /// Serializes to ALIST (1-based, zero-padded).
    pub fn to_alist(&self) -> String {
        let max_col = self.cols.iter().map(Vec::len).max().unwrap_or(0);
        let max_row = self.rows.iter().map(Vec::len).max().unwrap_or(0);
        let mut s = String::new();
        let line = |s: &mut String, v: &mut dyn Iterator<Item = usize>| {
            let parts: Vec<String> = v.map(|x| x.to_string()).collect();
            writeln!(s, "{}", parts.join(" ")).ok();
        };
        writeln!(s, "{} {}", self.n, self.m()).ok();
        writeln!(s, "{max_col} {max_row}").ok();
        line(&mut s, &mut self.cols.iter().map(Vec::len));
        line(&mut s, &mut self.rows.iter().map(Vec::len));
        for c in &self.cols {
            line(&mut s, &mut (0..max_col).map(|i| c.get(i).map_or(0, |r| r + 1)));
        }
        for r in &self.rows {
            line(&mut s, &mut (0..max_row).map(|i| r.get(i).map_or(0, |c| c + 1)));
        }
        s
    }

    /// Length of the shortest cycle in the Tanner graph (`usize::MAX` if acyclic).
    pub fn girth(&self) -> usize {
        let m = self.m();
        let total = self.n + m;
        let neighbours = |v: usize| -> Vec<usize> {
            if v < self.n {
                self.cols[v].iter().map(|&r| self.n + r).collect()
            } else {
                self.rows[v - self.n].clone()
            }
        };
        let mut best = usize::MAX;
        for start in 0..self.n {
            let mut dist = vec![usize::MAX; total];
            let mut parent = vec![usize::MAX; total];
            dist[start] = 0;
            let mut q = VecDeque::from([start]);
            while let Some(u) = q.pop_front() {
                if 2 * dist[u] >= best {
                    break;
                }
                for w in neighbours(u) {
                    if dist[w] == usize::MAX {
                        dist[w] = dist[u] + 1;
                        parent[w] = u;
                        q.push_back(w);
                    } else if parent[u] != w {
                        best = best.min(dist[u] + dist[w] + 1);
                    }
                }
            }
        }
        best
    }

    /// Progressive-edge-growth construction of a `(dv, dc)`-regular matrix.
    ///
    /// Each new edge of a variable node goes to a check node as far away as
    /// possible in the current graph, ties broken by lowest degree and then by
    /// a seeded shuffle. Check degrees never exceed `dc`.
    pub fn progressive_edge_growth(n: usize, dv: usize, dc: usize, seed: u64) -> Result<Self, CodingError> {
        if n == 0 || dv == 0 || dc == 0 || (n * dv) % dc != 0 {
            return Err(CodingError::InvalidCode(format!("no ({dv},{dc})-regular code of length {n}")));
        }
        let m = n * dv / dc;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); m];
        let mut cols: Vec<Vec<usize>> = vec![Vec::new(); n];
        for v in 0..n {
            for _ in 0..dv {
                // BFS depth of every check from v in the current graph.
                let mut depth = vec![usize::MAX; m];
                let mut seen_var = vec![false; n];
                seen_var[v] = true;
                let mut frontier = vec![v];
                let mut d = 0;
                while !frontier.is_empty() {
                    let mut next = Vec::new();
                    for &u in &frontier {
                        for &c in &cols[u] {
                            if depth[c] == usize::MAX {
                                depth[c] = d;
                                for &w in &rows[c] {
                                    if !seen_var[w] {
                                        seen_var[w] = true;
                                        next.push(w);
                                    }
                                }
                            }
                        }
                    }
                    frontier = next;
                    d += 1;
                }
                let open: Vec<usize> = (0..m).filter(|&c| rows[c].len() < dc && !cols[v].contains(&c)).collect();
                if open.is_empty() {
                    return Err(CodingError::InvalidCode("edge growth ran out of check sockets".into()));
                }
                let far = open.iter().map(|&c| depth[c]).max().unwrap_or(usize::MAX);
                let mut cand: Vec<usize> = open.into_iter().filter(|&c| depth[c] == far).collect();
                let low = cand.iter().map(|&c| rows[c].len()).min().unwrap_or(0);
                cand.retain(|&c| rows[c].len() == low);
                cand.shuffle(&mut rng);
                let c = cand[0];
                rows[c].push(v);
                cols[v].push(c);
            }
        }
        for r in &mut rows {
            r.sort_unstable();
        }
        ParityCheck::from_rows(n, rows)
    }
}

/// Dense GF(2) row packed into 64-bit words.
#[derive(Clone)]
struct BitRow(Vec<u64>);

impl BitRow {
    fn zeros(n: usize) -> Self {
        BitRow(vec![0; n.div_ceil(64)])
    }
    fn get(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }
    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }
    fn xor(&mut self, o: &BitRow) {
        for (a, b) in self.0.iter_mut().zip(&o.0) {
            *a ^= b;
        }
    }
}

/// A linear block code with a systematic encoder derived from its parity checks.
#[derive(Clone)]
pub struct LdpcCode {
    h: ParityCheck,
    /// Message bit `i` is placed at codeword position `info[i]`.
    info: Vec<usize>,
    /// `(pivot column, message indices whose XOR gives that bit)`.
    parity: Vec<(usize, Vec<usize>)>,
}

impl std::fmt::Debug for LdpcCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LdpcCode").field("n", &self.n()).field("k", &self.k()).finish()
    }
}

impl LdpcCode {
    /// Reduces `h` to row echelon form over GF(2); dependent rows are dropped
    /// from the encoder but kept for decoding.
    pub fn new(h: ParityCheck) -> Result<Self, CodingError> {
        let n = h.n;
        let mut dense: Vec<BitRow> = h
            .rows
            .iter()
            .map(|r| {
                let mut b = BitRow::zeros(n);
                r.iter().for_each(|&c| b.set(c));
                b
            })
            .collect();
        let mut pivots = Vec::new();
        let mut rank = 0;
        for col in 0..n {
            let Some(p) = (rank..dense.len()).find(|&r| dense[r].get(col)) else {
                continue;
            };
            dense.swap(rank, p);
            let pivot_row = dense[rank].clone();
            for (r, row) in dense.iter_mut().enumerate() {
                if r != rank && row.get(col) {
                    row.xor(&pivot_row);
                }
            }
            pivots.push(col);
            rank += 1;
            if rank == dense.len() {
                break;
            }
        }
        let is_pivot = {
            let mut v = vec![false; n];
            pivots.iter().for_each(|&c| v[c] = true);
            v
        };
        let info: Vec<usize> = (0..n).filter(|&c| !is_pivot[c]).collect();
        if info.is_empty() {
            return Err(CodingError::InvalidCode("code has dimension zero".into()));
        }
        let msg_index = {
            let mut v = vec![usize::MAX; n];
            info.iter().enumerate().for_each(|(i, &c)| v[c] = i);
            v
        };
        let parity = pivots
            .iter()
            .enumerate()
            .map(|(r, &pc)| {
                let deps = info.iter().filter(|&&c| dense[r].get(c)).map(|&c| msg_index[c]).collect();
                (pc, deps)
            })
            .collect();
        Ok(LdpcCode { h, info, parity })
    }

    pub fn parity_check(&self) -> &ParityCheck {
        &self.h
    }

    pub fn n(&self) -> usize {
        self.h.n
    }

    pub fn k(&self) -> usize {
        self.info.len()
    }

    pub fn rate(&self) -> f64 {
        self.k() as f64 / self.n() as f64
    }

    /// Codeword positions carrying the message bits.
    pub fn info_positions(&self) -> &[usize] {
        &self.info
    }

    pub fn encode(&self, msg: &[u8]) -> Result<Vec<u8>, CodingError> {
        if msg.len() != self.k() {
            return Err(CodingError::LengthMismatch { expected: self.k(), got: msg.len() });
        }
        let mut c = vec![0u8; self.n()];
        for (i, &pos) in self.info.iter().enumerate() {
            c[pos] = msg[i] & 1;
        }
        for (pc, deps) in &self.parity {
            c[*pc] = deps.iter().fold(0, |a, &i| a ^ (msg[i] & 1));
        }
        Ok(c)
    }

    pub fn is_codeword(&self, bits: &[u8]) -> bool {
        bits.len() == self.n() && self.h.syndrome_ok(bits)
    }

    /// Posterior LLRs (`ln P(0)/P(1)`) given channel LLRs.
    ///
    /// Uses exhaustive enumeration for dimensions up to [`EXHAUSTIVE_MAX_K`]
    /// (where BP on a loopy graph would not be exact) and BP otherwise.
    pub fn decode(&self, channel_llr: &[f64], bp_iters: usize) -> Vec<f64> {
        if self.k() <= EXHAUSTIVE_MAX_K {
            self.exhaustive_app(channel_llr)
        } else {
            self.bp_decode(channel_llr, bp_iters)
        }
    }

    /// Bitwise APP by enumerating every codeword.
    pub fn exhaustive_app(&self, channel_llr: &[f64]) -> Vec<f64> {
        assert!(self.k() <= 24, "exhaustive decoding limited to small codes");
        let n = self.n();
        // log-weights per codeword, accumulated with log-sum-exp per bit value.
        let mut lse0 = vec![f64::NEG_INFINITY; n];
        let mut lse1 = vec![f64::NEG_INFINITY; n];
        let mut msg = vec![0u8; self.k()];
        for word in 0u64..(1 << self.k()) {
            for (i, b) in msg.iter_mut().enumerate() {
                *b = (word >> i & 1) as u8;
            }
            let c = self.encode(&msg).expect("length matches");
            // log P(c | y) up to a constant: Σ_{c_i = 0} llr_i / 2 - Σ_{c_i = 1} llr_i / 2
            let w: f64 = c
                .iter()
                .zip(channel_llr)
                .map(|(&b, &l)| if b == 0 { 0.5 * l } else { -0.5 * l })
                .sum();
            for (i, &b) in c.iter().enumerate() {
                let slot = if b == 0 { &mut lse0[i] } else { &mut lse1[i] };
                *slot = log_add(*slot, w);
            }
        }
        lse0.iter().zip(&lse1).map(|(a, b)| a - b).collect()
    }

    /// Flooding sum-product decoding; stops early once the hard decision is a codeword.
    pub fn bp_decode(&self, channel_llr: &[f64], iters: usize) -> Vec<f64> {
        let h = &self.h;
        let n = h.n;
        // Edges enumerated row by row.
        let mut row_start = Vec::with_capacity(h.m() + 1);
        let mut edge_var = Vec::new();
        row_start.push(0);
        for r in &h.rows {
            edge_var.extend_from_slice(r);
            row_start.push(edge_var.len());
        }
        let mut var_edges: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (e, &v) in edge_var.iter().enumerate() {
            var_edges[v].push(e);
        }
        let ne = edge_var.len();
        let mut c2v = vec![0.0; ne];
        let mut v2c = vec![0.0; ne];
        let mut post: Vec<f64> = channel_llr.to_vec();
        let mut hard = vec![0u8; n];
        let mut t = vec![0.0; 0];
        for _ in 0..iters {
            for v in 0..n {
                let total = channel_llr[v] + var_edges[v].iter().map(|&e| c2v[e]).sum::<f64>();
                for &e in &var_edges[v] {
                    v2c[e] = total - c2v[e];
                }
            }
            for r in 0..h.m() {
                let (a, b) = (row_start[r], row_start[r + 1]);
                t.clear();
                t.extend(v2c[a..b].iter().map(|&x| (0.5 * x).tanh()));
                // Exclusive products via prefix/suffix sweeps.
                let d = b - a;
                let mut prefix = 1.0;
                for i in 0..d {
                    c2v[a + i] = prefix;
                    prefix *= t[i];
                }
                let mut suffix = 1.0;
                for i in (0..d).rev() {
                    let p = (c2v[a + i] * suffix).clamp(-1.0 + 1e-16, 1.0 - 1e-16);
                    c2v[a + i] = (2.0 * p.atanh()).clamp(-LLR_CAP, LLR_CAP);
                    suffix *= t[i];
                }
            }
            for v in 0..n {
                post[v] = channel_llr[v] + var_edges[v].iter().map(|&e| c2v[e]).sum::<f64>();
                hard[v] = u8::from(post[v] < 0.0);
            }
            if h.syndrome_ok(&hard) {
                break;
            }
        }
        post
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// The (7,4) Hamming code viewed as a parity-check code.
pub fn hamming_7_4() -> LdpcCode {
    let rows = vec![vec![0, 2, 4, 6], vec![1, 2, 5, 6], vec![3, 4, 5, 6]];
    LdpcCode::new(ParityCheck::from_rows(7, rows).expect("valid")).expect("valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alist_round_trip() {
        let h = ParityCheck::progressive_edge_growth(48, 3, 6, 3).unwrap();
        let back = ParityCheck::from_alist(&h.to_alist()).unwrap();
        assert_eq!(h, back);
    }

    #[test]
    fn peg_is_regular_without_four_cycles() {
        let h = ParityCheck::progressive_edge_growth(96, 3, 6, 11).unwrap();
        assert!(h.cols.iter().all(|c| c.len() == 3));
        assert!(h.rows.iter().all(|r| r.len() == 6));
        assert!(h.girth() >= 6);
    }

    #[test]
    fn hamming_dimensions_and_codewords() {
        let code = hamming_7_4();
        assert_eq!((code.n(), code.k()), (7, 4));
        for w in 0..16u8 {
            let msg: Vec<u8> = (0..4).map(|i| w >> i & 1).collect();
            assert!(code.is_codeword(&code.encode(&msg).unwrap()));
        }
    }

    #[test]
    fn encode_rejects_wrong_length() {
        assert!(matches!(
            hamming_7_4().encode(&[0, 1]),
            Err(CodingError::LengthMismatch { expected: 4, got: 2 })
        ));
    }

    #[test]
    fn malformed_alist_is_rejected() {
        assert!(ParityCheck::from_alist("3 2\n2 3\n1 1").is_err());
    }
}
