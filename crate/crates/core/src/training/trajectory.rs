//! Per-step radius trajectory, its CSV form, and the checks that compare
//! logged radius increments against the motion laws.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use super::TrainError;

/// Which segment of an epoch produced a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Mpf,
    Adv,
    G2,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Mpf, Phase::Adv, Phase::G2];

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Mpf => "mpf-step",
            Phase::Adv => "adv-step",
            Phase::G2 => "g2-step",
        })
    }
}

impl FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mpf-step" => Ok(Phase::Mpf),
            "adv-step" => Ok(Phase::Adv),
            "g2-step" => Ok(Phase::G2),
            other => Err(format!("unknown phase `{other}`")),
        }
    }
}

/// One classifier update.
///
/// `r` is the radius after the step. `r0` is the most recently recorded
/// initial radius, `kappa`, `d0` and `lr` are the values the step used, and
/// the loss terms are evaluated before the update. `lo_active`/`j_active`
/// are the fractions of samples whose hinge was active. `gen_loss` and
/// `disc_loss` hold the generator (or boundary-generator) and
/// discriminator losses of the same step, zero when absent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record {
    pub step: usize,
    pub epoch: usize,
    pub batch: usize,
    pub phase: Phase,
    pub r: f64,
    pub r0: f64,
    pub kappa: f64,
    pub d0: f64,
    pub lc: f64,
    pub lo: f64,
    pub j: f64,
    pub lr: f64,
    pub lo_active: f64,
    pub j_active: f64,
    pub gen_loss: f64,
    pub disc_loss: f64,
}

pub const CSV_HEADER: &str = "step,epoch,batch,phase,R,R0,kappa,d0,lc,lo,j,lr,lo_active,j_active,gen_loss,disc_loss";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryLog {
    records: Vec<Record>,
}

impl TrajectoryLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends `rec`; its step index must exceed the previous one.
    pub fn record(&mut self, rec: Record) -> Result<(), TrainError> {
        if let Some(last) = self.records.last() {
            if rec.step <= last.step {
                return Err(TrainError::Trajectory(format!(
                    "step {} does not follow step {}",
                    rec.step, last.step
                )));
            }
        }
        if !rec.r.is_finite() {
            return Err(TrainError::Trajectory(format!(
                "non-finite radius at step {}",
                rec.step
            )));
        }
        self.records.push(rec);
        Ok(())
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&Record> {
        self.records.last()
    }

    /// Floats carry 12 significant digits.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e}",
                r.step,
                r.epoch,
                r.batch,
                r.phase,
                r.r,
                r.r0,
                r.kappa,
                r.d0,
                r.lc,
                r.lo,
                r.j,
                r.lr,
                r.lo_active,
                r.j_active,
                r.gen_loss,
                r.disc_loss
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    /// Parses [`TrajectoryLog::write_csv`] output. The twelve core columns are
    /// required; the trailing diagnostic columns default to zero if absent.
    pub fn read_csv(r: impl BufRead) -> Result<Self, TrainError> {
        let mut lines = r.lines();
        let bad = |line: usize, msg: String| TrainError::Trajectory(format!("line {line}: {msg}"));
        let header = match lines.next() {
            Some(h) => h.map_err(|e| bad(1, e.to_string()))?,
            None => return Err(TrainError::Trajectory("empty trajectory file".into())),
        };
        let columns: Vec<&str> = header.trim().split(',').collect();
        let expected: Vec<&str> = CSV_HEADER.split(',').collect();
        if columns.len() < 12 || columns[..] != expected[..columns.len()] {
            return Err(bad(1, format!("unexpected header `{}`", header.trim())));
        }
        let mut log = TrajectoryLog::new();
        for (i, line) in lines.enumerate() {
            let n = i + 2;
            let line = line.map_err(|e| bad(n, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.trim().split(',').collect();
            if f.len() != columns.len() {
                return Err(bad(n, format!("expected {} fields, found {}", columns.len(), f.len())));
            }
            let int = |k: usize| {
                f[k].parse::<usize>()
                    .map_err(|_| bad(n, format!("`{}` is not an integer", f[k])))
            };
            let float = |k: usize| -> Result<f64, TrainError> {
                match f.get(k) {
                    None => Ok(0.0),
                    Some(s) => s.parse::<f64>().map_err(|_| bad(n, format!("`{s}` is not a number"))),
                }
            };
            let rec = Record {
                step: int(0)?,
                epoch: int(1)?,
                batch: int(2)?,
                phase: f[3].parse().map_err(|e| bad(n, e))?,
                r: float(4)?,
                r0: float(5)?,
                kappa: float(6)?,
                d0: float(7)?,
                lc: float(8)?,
                lo: float(9)?,
                j: float(10)?,
                lr: float(11)?,
                lo_active: float(12)?,
                j_active: float(13)?,
                gen_loss: float(14)?,
                disc_loss: float(15)?,
            };
            log.record(rec).map_err(|e| bad(n, e.to_string()))?;
        }
        if log.is_empty() {
            return Err(TrainError::Trajectory("trajectory has no records".into()));
        }
        Ok(log)
    }
}

/// Which motion law a step falls under, by active hinges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Motion {
    /// Only the margin term pulls: `ΔR = μλ`.
    Positive,
    /// Both terms active: `ΔR = μ(λ − βκ)`.
    Adversarial,
    /// Only the far-region term pushes: `ΔR = −μβκ`.
    Negative,
    /// Neither hinge active: `ΔR = 0`.
    Still,
}

impl Motion {
    pub const ALL: [Motion; 4] = [Motion::Positive, Motion::Adversarial, Motion::Negative, Motion::Still];

    pub fn of(rec: &Record) -> Motion {
        match (rec.lo_active > 0.0, rec.j_active > 0.0) {
            (true, false) => Motion::Positive,
            (true, true) => Motion::Adversarial,
            (false, true) => Motion::Negative,
            (false, false) => Motion::Still,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Motion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Motion::Positive => "positive (mu*lambda)",
            Motion::Adversarial => "adversarial (mu*(lambda-beta*kappa))",
            Motion::Negative => "negative (-mu*beta*kappa)",
            Motion::Still => "still (0)",
        })
    }
}

/// Predicted radius increment of each record.
///
/// The radius gradient of the batch-mean objective is
/// `−λ·f_o + βκ·f_j`, with `f_o`, `f_j` the active fractions, so a plain
/// step moves `R` by `μ(λ f_o − βκ f_j)`. With heavy-ball momentum `m` the
/// velocity carries over: `ΔR_t = m (μ_t / μ_{t−1}) ΔR_{t−1} + μ_t(λ f_o − βκ f_j)`,
/// using the logged previous increment.
pub fn predicted_increments(records: &[Record], lambda: f64, beta: f64, momentum: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(records.len());
    let (mut prev_r, mut prev_dr, mut prev_lr) = (0.0, 0.0, 0.0);
    for rec in records {
        let drive = rec.lr * (lambda * rec.lo_active - beta * rec.kappa * rec.j_active);
        let carry = if momentum != 0.0 && prev_lr != 0.0 {
            momentum * (rec.lr / prev_lr) * prev_dr
        } else {
            0.0
        };
        out.push(carry + drive);
        prev_dr = rec.r - prev_r;
        prev_r = rec.r;
        prev_lr = rec.lr;
    }
    out
}

/// Logged increments `R_t − R_{t−1}`, with `R_{−1} = 0`.
pub fn observed_increments(records: &[Record]) -> Vec<f64> {
    let mut prev = 0.0;
    records
        .iter()
        .map(|r| {
            let d = r.r - prev;
            prev = r.r;
            d
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LawTally {
    pub steps: usize,
    pub matched: usize,
}

impl LawTally {
    pub fn fraction(&self) -> Option<f64> {
        (self.steps > 0).then(|| self.matched as f64 / self.steps as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conformance {
    /// Indexed like [`Motion::ALL`].
    pub by_motion: [LawTally; 4],
    pub max_abs_error: f64,
}

impl Conformance {
    pub fn tally(&self, m: Motion) -> LawTally {
        self.by_motion[m.index()]
    }

    pub fn total(&self) -> LawTally {
        self.by_motion.iter().fold(LawTally::default(), |a, t| LawTally {
            steps: a.steps + t.steps,
            matched: a.matched + t.matched,
        })
    }
}

/// Compares every logged increment with its prediction to absolute `tol`.
pub fn conformance(records: &[Record], lambda: f64, beta: f64, momentum: f64, tol: f64) -> Conformance {
    let pred = predicted_increments(records, lambda, beta, momentum);
    let obs = observed_increments(records);
    let mut by_motion = [LawTally::default(); 4];
    let mut max_abs_error: f64 = 0.0;
    for ((rec, p), o) in records.iter().zip(pred).zip(obs) {
        let err = (p - o).abs();
        max_abs_error = max_abs_error.max(err);
        let t = &mut by_motion[Motion::of(rec).index()];
        t.steps += 1;
        if err <= tol {
            t.matched += 1;
        }
    }
    Conformance {
        by_motion,
        max_abs_error,
    }
}

/// Radius statistics of one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSummary {
    pub epoch: usize,
    /// Radius before the epoch's first step.
    pub r_start: f64,
    pub r_end: f64,
    pub min_r: f64,
    pub max_r: f64,
    /// Every distinct initial radius recorded during the epoch, in order.
    pub r0: Vec<f64>,
    /// Step counts indexed like [`Phase::ALL`].
    pub phase_counts: [usize; 3],
    /// The opening positive-motion segment ends above `r_start`.
    pub rises: bool,
    /// After the first recorded `R0`, the radius drops below it.
    pub falls: bool,
}

pub fn epoch_summaries(records: &[Record]) -> Vec<EpochSummary> {
    let mut out: Vec<EpochSummary> = Vec::new();
    let mut prev_r = 0.0;
    let mut i = 0;
    while i < records.len() {
        let epoch = records[i].epoch;
        let mut j = i;
        while j < records.len() && records[j].epoch == epoch {
            j += 1;
        }
        let recs = &records[i..j];
        let mut phase_counts = [0; 3];
        for r in recs {
            phase_counts[r.phase.index()] += 1;
        }
        // R0 is recorded as the radius at the end of each opening mpf run.
        let mut r0 = Vec::new();
        let mut first_r0_at = None;
        for (k, r) in recs.iter().enumerate() {
            let next_is_adv = recs.get(k + 1).is_some_and(|n| n.phase != Phase::Mpf);
            if r.phase == Phase::Mpf && next_is_adv {
                r0.push(r.r);
                first_r0_at.get_or_insert(k);
            }
        }
        let rs = recs.iter().map(|r| r.r);
        let min_r = rs.clone().fold(f64::INFINITY, f64::min);
        let max_r = rs.fold(f64::NEG_INFINITY, f64::max);
        let (rises, falls) = match first_r0_at {
            Some(k) => (recs[k].r > prev_r, recs[k + 1..].iter().any(|r| r.r < recs[k].r)),
            None => (recs.last().is_some_and(|r| r.r > prev_r), false),
        };
        out.push(EpochSummary {
            epoch,
            r_start: prev_r,
            r_end: recs[recs.len() - 1].r,
            min_r,
            max_r,
            r0,
            phase_counts,
            rises,
            falls,
        });
        prev_r = recs[recs.len() - 1].r;
        i = j;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(step: usize, phase: Phase, r: f64) -> Record {
        Record {
            step,
            epoch: 0,
            batch: step,
            phase,
            r,
            r0: 0.0,
            kappa: 0.0,
            d0: 1.0 / 3.0,
            lc: 0.7,
            lo: 0.2,
            j: 0.0,
            lr: 0.1,
            lo_active: 1.0,
            j_active: 0.0,
            gen_loss: 0.0,
            disc_loss: 0.0,
        }
    }

    #[test]
    fn single_record() {
        let mut log = TrajectoryLog::new();
        log.record(rec(0, Phase::Mpf, 0.01)).unwrap();
        assert_eq!(log.len(), 1);
    }

    #[test]
    fn indices_must_increase() {
        let mut log = TrajectoryLog::new();
        for s in 0..1000 {
            log.record(rec(s, Phase::Mpf, 0.01 * s as f64)).unwrap();
        }
        assert!(log.records().windows(2).all(|w| w[0].step < w[1].step));
        assert!(log.record(rec(999, Phase::Mpf, 0.0)).is_err());
        assert!(log.record(rec(1000, Phase::Mpf, f64::NAN)).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let mut log = TrajectoryLog::new();
        for s in 0..50 {
            let phase = Phase::ALL[s % 3];
            log.record(Record {
                kappa: 12.345678901234567 + s as f64,
                gen_loss: 1.0 / (s + 1) as f64,
                ..rec(s, phase, (s as f64).sin())
            })
            .unwrap();
        }
        let text = log.to_csv_string();
        assert!(text.starts_with(CSV_HEADER));
        let back = TrajectoryLog::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back.len(), log.len());
        for (a, b) in back.records().iter().zip(log.records()) {
            assert_eq!((a.step, a.epoch, a.batch, a.phase), (b.step, b.epoch, b.batch, b.phase));
            for (x, y) in [(a.r, b.r), (a.kappa, b.kappa), (a.d0, b.d0), (a.gen_loss, b.gen_loss)] {
                assert!((x - y).abs() <= 1e-11 * y.abs().max(1e-300), "{x} vs {y}");
            }
        }
        assert_eq!(back.to_csv_string(), text);
    }

    #[test]
    fn core_columns_alone_parse() {
        let text = "step,epoch,batch,phase,R,R0,kappa,d0,lc,lo,j,lr\n0,0,0,mpf-step,1e-2,0,0,1,0.6,0.5,0,0.1\n";
        let log = TrajectoryLog::read_csv(text.as_bytes()).unwrap();
        assert_eq!(log.records()[0].r, 0.01);
        assert_eq!(log.records()[0].lo_active, 0.0);
    }

    #[test]
    fn malformed_files_rejected() {
        assert!(TrajectoryLog::read_csv("".as_bytes()).is_err());
        assert!(TrajectoryLog::read_csv(format!("{CSV_HEADER}\n").as_bytes()).is_err());
        assert!(TrajectoryLog::read_csv("a,b\n1,2\n".as_bytes()).is_err());
        let text = format!("{CSV_HEADER}\n0,0,0,bogus-step,0,0,0,0,0,0,0,0,0,0,0,0\n");
        assert!(TrajectoryLog::read_csv(text.as_bytes())
            .unwrap_err()
            .to_string()
            .contains("line 2"));
    }

    #[test]
    fn plain_predictions() {
        let mut a = rec(0, Phase::Adv, 0.0);
        a.kappa = 20.0;
        a.j_active = 1.0;
        let mut b = rec(1, Phase::Adv, 0.0);
        b.kappa = 20.0;
        b.lo_active = 0.0;
        b.j_active = 1.0;
        let p = predicted_increments(&[a, b], 0.1, 0.1, 0.0);
        assert!((p[0] + 0.19).abs() < 1e-15);
        assert!((p[1] + 0.20).abs() < 1e-15);
        assert_eq!(Motion::of(&a), Motion::Adversarial);
        assert_eq!(Motion::of(&b), Motion::Negative);
    }

    #[test]
    fn momentum_prediction_follows_velocity() {
        // Two unit-drive steps from 0 with μ = 0.1, m = 0.9: R = 0.01, then 0.029.
        let recs = [rec(0, Phase::Mpf, 0.1 * 0.1), rec(1, Phase::Mpf, 0.029)];
        let c = conformance(&recs, 0.1, 0.1, 0.9, 1e-12);
        assert_eq!(c.total().matched, 2, "{c:?}");
        let c = conformance(&recs, 0.1, 0.1, 0.0, 1e-12);
        assert_eq!(c.total().matched, 1);
    }

    #[test]
    fn summary_detects_rise_then_fall() {
        let mut recs = vec![rec(0, Phase::Mpf, 0.01), rec(1, Phase::Mpf, 0.02)];
        recs.push(rec(2, Phase::Adv, -0.1));
        recs.push(rec(3, Phase::Adv, -0.05));
        let s = &epoch_summaries(&recs)[0];
        assert_eq!(s.r0, vec![0.02]);
        assert_eq!(s.phase_counts, [2, 2, 0]);
        assert!(s.rises && s.falls);
        assert_eq!(s.min_r, -0.1);
    }
}
