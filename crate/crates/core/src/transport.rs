//! Simulated message passing between ranks.
//!
//! Ranks are isolated: each one only ever touches its own slice of the data,
//! and data crosses ranks exclusively through the collectives below, which
//! move ownership of the message buffers. Local phases run either round-robin
//! on the calling thread or on the rayon pool; results do not depend on the
//! choice.
//!
//! Every collective is tallied in a [`MessageCounter`] under a [`Phase`] tag.
//! Messages a rank addresses to itself are moved locally and never counted.

use std::collections::BTreeMap;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::TransportError;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    #[default]
    RoundRobin,
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    RightDiagonal,
    LeftDiagonal,
    Boundary,
    Reduction,
    Gather,
    Scatter,
}

impl Phase {
    pub const ALL: [Phase; 6] = [
        Phase::RightDiagonal,
        Phase::LeftDiagonal,
        Phase::Boundary,
        Phase::Reduction,
        Phase::Gather,
        Phase::Scatter,
    ];

    /// Phases that make up a Hamiltonian application.
    pub const MATVEC: [Phase; 3] = [Phase::RightDiagonal, Phase::LeftDiagonal, Phase::Boundary];
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseCounter {
    /// Collective invocations.
    pub calls: u64,
    pub elements_real: u64,
    pub elements_padded: u64,
    pub flops: u64,
}

impl PhaseCounter {
    fn add(&mut self, other: &PhaseCounter) {
        self.calls += other.calls;
        self.elements_real += other.elements_real;
        self.elements_padded += other.elements_padded;
        self.flops += other.flops;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MessageCounter {
    pub phases: BTreeMap<Phase, PhaseCounter>,
    pub rank_flops: Vec<u64>,
    /// Padded elements each rank sent to other ranks.
    pub rank_sent: Vec<u64>,
}

/// One row of the counter dump.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterRow {
    pub phase: Phase,
    pub calls: u64,
    pub elements_real: u64,
    pub elements_padded: u64,
    pub flops: u64,
}

impl MessageCounter {
    fn new(ranks: usize) -> Self {
        MessageCounter { phases: BTreeMap::new(), rank_flops: vec![0; ranks], rank_sent: vec![0; ranks] }
    }

    pub fn phase(&self, p: Phase) -> PhaseCounter {
        self.phases.get(&p).copied().unwrap_or_default()
    }

    pub fn total(&self, phases: &[Phase]) -> PhaseCounter {
        let mut acc = PhaseCounter::default();
        for p in phases {
            acc.add(&self.phase(*p));
        }
        acc
    }

    /// Counter increments since `earlier`.
    pub fn since(&self, earlier: &MessageCounter) -> MessageCounter {
        let mut out = MessageCounter::new(self.rank_flops.len());
        for (p, c) in &self.phases {
            let e = earlier.phase(*p);
            out.phases.insert(
                *p,
                PhaseCounter {
                    calls: c.calls - e.calls,
                    elements_real: c.elements_real - e.elements_real,
                    elements_padded: c.elements_padded - e.elements_padded,
                    flops: c.flops - e.flops,
                },
            );
        }
        for r in 0..out.rank_flops.len() {
            out.rank_flops[r] = self.rank_flops[r] - earlier.rank_flops.get(r).copied().unwrap_or(0);
            out.rank_sent[r] = self.rank_sent[r] - earlier.rank_sent.get(r).copied().unwrap_or(0);
        }
        out
    }

    pub fn rows(&self) -> Vec<CounterRow> {
        Phase::ALL
            .iter()
            .map(|&phase| {
                let c = self.phase(phase);
                CounterRow {
                    phase,
                    calls: c.calls,
                    elements_real: c.elements_real,
                    elements_padded: c.elements_padded,
                    flops: c.flops,
                }
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.rows()).expect("counter rows serialize")
    }
}

/// A message buffer with its unpadded payload length.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<S> {
    pub data: Vec<S>,
    pub real: usize,
}

/// Locally owned columns of a distributed matrix, column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnBlock<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> ColumnBlock<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        ColumnBlock { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn column(&self, j: usize) -> &[T] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn column_mut(&mut self, j: usize) -> &mut [T] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[col * self.rows + row]
    }
}

/// `n` items over `parts` owners: the first `n mod parts` owners receive one
/// extra item.
pub fn balanced_split(n: usize, parts: usize) -> Vec<usize> {
    let (q, r) = (n / parts, n % parts);
    (0..parts).map(|p| q + usize::from(p < r)).collect()
}

pub fn prefix_offsets(counts: &[usize]) -> Vec<usize> {
    let mut acc = 0;
    counts
        .iter()
        .map(|c| {
            let o = acc;
            acc += c;
            o
        })
        .collect()
}

#[derive(Debug)]
pub struct Communicator {
    size: usize,
    schedule: Schedule,
    counters: Mutex<MessageCounter>,
}

impl Communicator {
    pub fn new(size: usize, schedule: Schedule) -> Self {
        assert!(size >= 1, "communicator needs at least one rank");
        Communicator { size, schedule, counters: Mutex::new(MessageCounter::new(size)) }
    }

    pub fn serial() -> Self {
        Self::new(1, Schedule::RoundRobin)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn schedule(&self) -> Schedule {
        self.schedule
    }

    /// Runs `f(rank, input)` on every rank.
    pub fn run<I, O, F>(&self, inputs: Vec<I>, f: F) -> Vec<O>
    where
        I: Send,
        O: Send,
        F: Fn(usize, I) -> O + Sync + Send,
    {
        debug_assert_eq!(inputs.len(), self.size);
        match self.schedule {
            Schedule::RoundRobin => inputs.into_iter().enumerate().map(|(r, i)| f(r, i)).collect(),
            Schedule::Parallel => inputs.into_par_iter().enumerate().map(|(r, i)| f(r, i)).collect(),
        }
    }

    pub fn add_flops(&self, phase: Phase, rank: usize, flops: u64) {
        let mut c = self.counters.lock().unwrap();
        c.phases.entry(phase).or_default().flops += flops;
        c.rank_flops[rank] += flops;
    }

    pub fn snapshot(&self) -> MessageCounter {
        self.counters.lock().unwrap().clone()
    }

    pub fn reset_counters(&self) {
        *self.counters.lock().unwrap() = MessageCounter::new(self.size);
    }

    pub fn barrier(&self) {}

    /// Personalized all-to-all: `sends[p][m]` goes from rank `p` to rank `m`;
    /// the result is indexed `[m][p]`. All batches must share one padded
    /// length.
    pub fn all_to_all<S: Send>(
        &self,
        phase: Phase,
        sends: Vec<Vec<Batch<S>>>,
    ) -> Result<Vec<Vec<Batch<S>>>, TransportError> {
        let p = self.size;
        if sends.len() != p {
            return Err(TransportError::RankCount { expected: p, got: sends.len() });
        }
        let mut padded_len = None;
        for (from, row) in sends.iter().enumerate() {
            if row.len() != p {
                return Err(TransportError::BatchCount { rank: from, got: row.len(), expected: p });
            }
            for (to, b) in row.iter().enumerate() {
                let want = *padded_len.get_or_insert(b.data.len());
                if b.data.len() != want || b.real > want {
                    return Err(TransportError::BatchLength {
                        from,
                        to,
                        got: b.data.len(),
                        expected: want,
                    });
                }
            }
        }
        let mut recv: Vec<Vec<Option<Batch<S>>>> = (0..p).map(|_| (0..p).map(|_| None).collect()).collect();
        let mut tally = PhaseCounter { calls: 1, ..Default::default() };
        let mut sent = vec![0u64; p];
        for (from, row) in sends.into_iter().enumerate() {
            for (to, b) in row.into_iter().enumerate() {
                if from != to {
                    tally.elements_real += b.real as u64;
                    tally.elements_padded += b.data.len() as u64;
                    sent[from] += b.data.len() as u64;
                }
                recv[to][from] = Some(b);
            }
        }
        let mut c = self.counters.lock().unwrap();
        c.phases.entry(phase).or_default().add(&tally);
        for (r, s) in sent.into_iter().enumerate() {
            c.rank_sent[r] += s;
        }
        drop(c);
        Ok(recv.into_iter().map(|row| row.into_iter().map(Option::unwrap).collect()).collect())
    }

    /// Every rank receives every rank's contribution, in rank order.
    pub fn all_gather<S: Clone>(&self, phase: Phase, locals: Vec<Vec<S>>) -> Result<Vec<Vec<S>>, TransportError> {
        if locals.len() != self.size {
            return Err(TransportError::RankCount { expected: self.size, got: locals.len() });
        }
        let n: u64 = locals.iter().map(|v| v.len() as u64).sum();
        let fan = (self.size - 1) as u64;
        let mut c = self.counters.lock().unwrap();
        let e = c.phases.entry(phase).or_default();
        e.calls += 1;
        e.elements_real += n * fan;
        e.elements_padded += n * fan;
        for (r, v) in locals.iter().enumerate() {
            c.rank_sent[r] += v.len() as u64 * fan;
        }
        Ok(locals)
    }

    /// Rank 0 receives the concatenation of all contributions in rank order.
    pub fn gather<S>(&self, phase: Phase, locals: Vec<Vec<S>>) -> Result<Vec<S>, TransportError> {
        if locals.len() != self.size {
            return Err(TransportError::RankCount { expected: self.size, got: locals.len() });
        }
        let mut c = self.counters.lock().unwrap();
        let e = c.phases.entry(phase).or_default();
        e.calls += 1;
        let moved: u64 = locals.iter().skip(1).map(|v| v.len() as u64).sum();
        e.elements_real += moved;
        e.elements_padded += moved;
        for (r, v) in locals.iter().enumerate().skip(1) {
            c.rank_sent[r] += v.len() as u64;
        }
        drop(c);
        Ok(locals.into_iter().flatten().collect())
    }

    /// Rank 0 sends `parts[m]` to rank `m`.
    pub fn scatter<S>(&self, phase: Phase, parts: Vec<Vec<S>>) -> Result<Vec<Vec<S>>, TransportError> {
        if parts.len() != self.size {
            return Err(TransportError::RankCount { expected: self.size, got: parts.len() });
        }
        let moved: u64 = parts.iter().skip(1).map(|v| v.len() as u64).sum();
        let mut c = self.counters.lock().unwrap();
        let e = c.phases.entry(phase).or_default();
        e.calls += 1;
        e.elements_real += moved;
        e.elements_padded += moved;
        c.rank_sent[0] += moved;
        Ok(parts)
    }

    /// Sum over ranks, accumulated left to right in ascending rank order; the
    /// same value is delivered to every rank.
    pub fn all_reduce_sum(&self, locals: &[f64]) -> Result<f64, TransportError> {
        let v: Vec<Vec<f64>> = locals.iter().map(|&x| vec![x]).collect();
        Ok(self.all_reduce_sum_vec(&v)?[0])
    }

    pub fn all_reduce_sum_vec(&self, locals: &[Vec<f64>]) -> Result<Vec<f64>, TransportError> {
        if locals.len() != self.size {
            return Err(TransportError::RankCount { expected: self.size, got: locals.len() });
        }
        let len = locals[0].len();
        if let Some(bad) = locals.iter().find(|v| v.len() != len) {
            return Err(TransportError::Shape(len, bad.len()));
        }
        let mut acc = locals[0].clone();
        for v in &locals[1..] {
            for (a, b) in acc.iter_mut().zip(v) {
                *a += *b;
            }
        }
        // Modeled as a reduce to rank 0 followed by a broadcast.
        let moved = 2 * (self.size as u64 - 1) * len as u64;
        let mut c = self.counters.lock().unwrap();
        let e = c.phases.entry(Phase::Reduction).or_default();
        e.calls += 1;
        e.elements_real += moved;
        e.elements_padded += moved;
        for r in 1..self.size {
            c.rank_sent[r] += len as u64;
        }
        c.rank_sent[0] += (self.size as u64 - 1) * len as u64;
        Ok(acc)
    }
}

/// Padded elements moved between distinct ranks by one T* of a
/// `rows × cols` matrix: `V_pad·(1 − 1/P)` with
/// `V_pad = P·⌈cols/P⌉ · P·⌈rows/P⌉`.
pub fn transpose_volume(rows: usize, cols: usize, ranks: usize) -> u64 {
    let (tc, tr) = (cols.div_ceil(ranks), rows.div_ceil(ranks));
    (ranks * (ranks - 1) * tc * tr) as u64
}

/// Distributed transpose T*.
///
/// Input: rank `p` owns columns `offset(p)..offset(p)+n_p` (balanced split of
/// `cols`) of a `rows × cols` matrix, each column complete. Output: rank `m`
/// owns the balanced-split columns of the `cols × rows` transpose, i.e. row
/// batch `m` of the input. The batch of rows owned by `m` within rank `p`'s
/// columns travels from `p` to `m`; batches are zero-padded to
/// `⌈cols/P⌉ × ⌈rows/P⌉`.
pub fn parallel_transpose<T: Scalar>(
    comm: &Communicator,
    phase: Phase,
    blocks: Vec<ColumnBlock<T>>,
    rows: usize,
    cols: usize,
) -> Result<Vec<ColumnBlock<T>>, TransportError> {
    let p = comm.size();
    if blocks.len() != p {
        return Err(TransportError::RankCount { expected: p, got: blocks.len() });
    }
    let col_counts = balanced_split(cols, p);
    let col_offsets = prefix_offsets(&col_counts);
    let row_counts = balanced_split(rows, p);
    let row_offsets = prefix_offsets(&row_counts);
    for (rank, b) in blocks.iter().enumerate() {
        if b.rows != rows || b.cols != col_counts[rank] || b.data.len() != b.rows * b.cols {
            return Err(TransportError::Geometry {
                rank,
                rows: b.rows,
                cols: b.cols,
                want_rows: rows,
                want_cols: col_counts[rank],
            });
        }
    }
    let (tc, tr) = (cols.div_ceil(p), rows.div_ceil(p));

    let sends = comm.run(blocks, |_rank, b| {
        (0..p)
            .map(|m| {
                let (r0, rn) = (row_offsets[m], row_counts[m]);
                let mut data = vec![T::zero(); tc * tr];
                for j in 0..b.cols {
                    let col = &b.data[j * rows + r0..j * rows + r0 + rn];
                    data[j * tr..j * tr + rn].copy_from_slice(col);
                }
                Batch { data, real: b.cols * rn }
            })
            .collect::<Vec<_>>()
    });
    let recv = comm.all_to_all(phase, sends)?;

    Ok(comm.run(recv, |m, batches| {
        let rn = row_counts[m];
        let mut out = ColumnBlock { rows: cols, cols: rn, data: vec![T::zero(); cols * rn] };
        for (src, batch) in batches.into_iter().enumerate() {
            let c0 = col_offsets[src];
            for j in 0..col_counts[src] {
                for i in 0..rn {
                    out.data[i * cols + c0 + j] = batch.data[j * tr + i];
                }
            }
        }
        out
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn distribute(rows: usize, cols: usize, p: usize, f: impl Fn(usize, usize) -> f64) -> Vec<ColumnBlock<f64>> {
        let counts = balanced_split(cols, p);
        let offs = prefix_offsets(&counts);
        (0..p)
            .map(|r| {
                let mut b = ColumnBlock::zeros(rows, counts[r]);
                for j in 0..counts[r] {
                    for i in 0..rows {
                        b.data[j * rows + i] = f(i, offs[r] + j);
                    }
                }
                b
            })
            .collect()
    }

    #[test]
    fn split_rule() {
        assert_eq!(balanced_split(7, 3), vec![3, 2, 2]);
        assert_eq!(balanced_split(4, 1), vec![4]);
        assert_eq!(balanced_split(2, 4), vec![1, 1, 0, 0]);
    }

    #[test]
    fn serial_transpose_moves_nothing() {
        let comm = Communicator::serial();
        let b = distribute(3, 2, 1, |i, j| (10 * i + j) as f64);
        let t = parallel_transpose(&comm, Phase::Boundary, b, 3, 2).unwrap();
        assert_eq!(t[0].rows, 2);
        assert_eq!(t[0].cols, 3);
        assert_eq!(t[0].get(1, 2), 21.0);
        let c = comm.snapshot().phase(Phase::Boundary);
        assert_eq!((c.calls, c.elements_padded, c.elements_real), (1, 0, 0));
    }

    #[test]
    fn two_by_two_trace() {
        // [[a,b],[c,d]] with a=1, b=2, c=3, d=4; rank 0 holds (a,c), rank 1 (b,d).
        let comm = Communicator::new(2, Schedule::RoundRobin);
        let b = distribute(2, 2, 2, |i, j| [[1.0, 2.0], [3.0, 4.0]][i][j]);
        assert_eq!(b[0].data, vec![1.0, 3.0]);
        let t = parallel_transpose(&comm, Phase::Boundary, b, 2, 2).unwrap();
        assert_eq!(t[0].data, vec![1.0, 2.0]);
        assert_eq!(t[1].data, vec![3.0, 4.0]);
        let c = comm.snapshot().phase(Phase::Boundary);
        assert_eq!(c.elements_padded, 2);
        assert_eq!(c.elements_real, 2);
    }

    #[test]
    fn four_by_four_volume() {
        let comm = Communicator::new(2, Schedule::Parallel);
        let b = distribute(4, 4, 2, |i, j| (i * 4 + j) as f64);
        parallel_transpose(&comm, Phase::LeftDiagonal, b, 4, 4).unwrap();
        assert_eq!(comm.snapshot().phase(Phase::LeftDiagonal).elements_padded, 8);
        assert_eq!(transpose_volume(4, 4, 2), 8);
    }

    #[test]
    fn geometry_mismatch_aborts() {
        let comm = Communicator::new(2, Schedule::RoundRobin);
        let mut b = distribute(3, 3, 2, |_, _| 1.0);
        b[1] = ColumnBlock::zeros(3, 2);
        assert!(matches!(
            parallel_transpose(&comm, Phase::Boundary, b, 3, 3),
            Err(TransportError::Geometry { rank: 1, .. })
        ));
    }

    #[test]
    fn reductions() {
        let comm = Communicator::new(4, Schedule::RoundRobin);
        assert_eq!(comm.all_reduce_sum(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 10.0);
        let one = Communicator::serial();
        assert_eq!(one.all_reduce_sum(&[0.3]).unwrap(), 0.3);
        assert!(comm.all_reduce_sum_vec(&[vec![1.0], vec![1.0, 2.0], vec![], vec![]]).is_err());

        let ten = Communicator::new(10, Schedule::RoundRobin);
        let serial = (0..10).fold(0.0f64, |acc, _| acc + 0.1);
        assert_eq!(ten.all_reduce_sum(&[0.1; 10]).unwrap().to_bits(), serial.to_bits());
    }

    #[test]
    fn all_to_all_rejects_ragged_batches() {
        let comm = Communicator::new(2, Schedule::RoundRobin);
        let sends = vec![
            vec![Batch { data: vec![1.0], real: 1 }, Batch { data: vec![1.0], real: 1 }],
            vec![Batch { data: vec![1.0], real: 1 }, Batch { data: vec![1.0, 2.0], real: 2 }],
        ];
        assert!(comm.all_to_all(Phase::Boundary, sends).is_err());
    }
}
