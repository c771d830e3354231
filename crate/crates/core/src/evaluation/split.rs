use std::collections::BTreeSet;

use crate::dataio::ManifestEntry;
use crate::error::{Error, Result};
use crate::numeric::Rng;

/// Subjects held out for testing in the 52-speaker protocol.
pub const OULUVS2_TEST_SUBJECTS: [u32; 12] = [6, 8, 9, 15, 26, 30, 34, 43, 44, 49, 51, 52];
pub const OULUVS2_SUBJECTS: usize = 52;
pub const OULUVS2_TRAIN_SUBJECTS: usize = 30;
pub const CUAVE_SUBJECTS: usize = 36;
pub const CUAVE_TRAIN_SUBJECTS: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Protocol {
    /// 12 fixed test speakers; the other 40 shuffled into 30 train / 10 validation.
    OuluVs2,
    /// Odd-numbered speakers test; the 18 even ones shuffled into 12 train / 6 validation.
    Cuave,
    Explicit {
        train: BTreeSet<String>,
        val: BTreeSet<String>,
        test: BTreeSet<String>,
    },
}

impl Protocol {
    pub fn name(&self) -> &'static str {
        match self {
            Self::OuluVs2 => "ouluvs2",
            Self::Cuave => "cuave",
            Self::Explicit { .. } => "explicit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitPart {
    Train,
    Val,
    Test,
}

impl SplitPart {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Self::Train),
            "val" => Ok(Self::Val),
            "test" => Ok(Self::Test),
            other => Err(Error::Config(format!("split {other:?}, expected train|val|test"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec {
    pub protocol: &'static str,
    pub train: BTreeSet<String>,
    pub val: BTreeSet<String>,
    pub test: BTreeSet<String>,
    pub seed: u64,
}

impl SplitSpec {
    pub fn subjects(&self, part: SplitPart) -> &BTreeSet<String> {
        match part {
            SplitPart::Train => &self.train,
            SplitPart::Val => &self.val,
            SplitPart::Test => &self.test,
        }
    }

    pub fn part_of(&self, subject: &str) -> Option<SplitPart> {
        [SplitPart::Train, SplitPart::Val, SplitPart::Test]
            .into_iter()
            .find(|&p| self.subjects(p).contains(subject))
    }

    pub fn entries<'a>(&self, entries: &'a [ManifestEntry], part: SplitPart) -> Vec<&'a ManifestEntry> {
        let subjects = self.subjects(part);
        entries.iter().filter(|e| subjects.contains(&e.subject_id)).collect()
    }
}

/// Integer value of a subject id, ignoring any non-digit prefix (`s07` -> 7).
pub fn subject_number(id: &str) -> Result<u32> {
    let digits = id.trim_start_matches(|c: char| !c.is_ascii_digit());
    digits
        .parse()
        .map_err(|_| Error::Split(format!("subject id {id:?} is not numbered")))
}

fn shuffled_halves(mut pool: Vec<String>, first: usize, rng: &mut Rng) -> (BTreeSet<String>, BTreeSet<String>) {
    rng.shuffle(&mut pool);
    let second = pool.split_off(first);
    (pool.into_iter().collect(), second.into_iter().collect())
}

fn check_count(protocol: &str, subjects: &BTreeSet<String>, expected: usize) -> Result<()> {
    if subjects.len() != expected {
        return Err(Error::Split(format!(
            "{protocol} protocol needs {expected} subjects, manifest has {}",
            subjects.len()
        )));
    }
    Ok(())
}

/// Subject-level train/validation/test split of a manifest.
pub fn build_split(entries: &[ManifestEntry], protocol: &Protocol, seed: u64) -> Result<SplitSpec> {
    let subjects: BTreeSet<String> = entries.iter().map(|e| e.subject_id.clone()).collect();
    let mut rng = Rng::derive(seed, "split");
    let (train, val, test) = match protocol {
        Protocol::OuluVs2 => {
            check_count("ouluvs2", &subjects, OULUVS2_SUBJECTS)?;
            let mut test = BTreeSet::new();
            let mut rest = Vec::new();
            for s in &subjects {
                if OULUVS2_TEST_SUBJECTS.contains(&subject_number(s)?) {
                    test.insert(s.clone());
                } else {
                    rest.push(s.clone());
                }
            }
            if test.len() != OULUVS2_TEST_SUBJECTS.len() {
                return Err(Error::Split(format!(
                    "ouluvs2 protocol expects test subjects {OULUVS2_TEST_SUBJECTS:?}, found {} of them",
                    test.len()
                )));
            }
            let (train, val) = shuffled_halves(rest, OULUVS2_TRAIN_SUBJECTS, &mut rng);
            (train, val, test)
        }
        Protocol::Cuave => {
            check_count("cuave", &subjects, CUAVE_SUBJECTS)?;
            let mut test = BTreeSet::new();
            let mut even = Vec::new();
            for s in &subjects {
                if subject_number(s)? % 2 == 1 {
                    test.insert(s.clone());
                } else {
                    even.push(s.clone());
                }
            }
            if test.len() != CUAVE_SUBJECTS / 2 {
                return Err(Error::Split(format!(
                    "cuave protocol expects {} odd-numbered subjects, found {}",
                    CUAVE_SUBJECTS / 2,
                    test.len()
                )));
            }
            let (train, val) = shuffled_halves(even, CUAVE_TRAIN_SUBJECTS, &mut rng);
            (train, val, test)
        }
        Protocol::Explicit { train, val, test } => (train.clone(), val.clone(), test.clone()),
    };
    let spec = SplitSpec {
        protocol: protocol.name(),
        train,
        val,
        test,
        seed,
    };
    check_partition(&spec, &subjects)?;
    Ok(spec)
}

fn check_partition(spec: &SplitSpec, subjects: &BTreeSet<String>) -> Result<()> {
    let parts = [("train", &spec.train), ("val", &spec.val), ("test", &spec.test)];
    for (i, (a, sa)) in parts.iter().enumerate() {
        for (b, sb) in &parts[i + 1..] {
            if let Some(s) = sa.intersection(sb).next() {
                return Err(Error::Split(format!("subject {s} is in both {a} and {b}")));
            }
        }
    }
    let union: BTreeSet<String> = parts.iter().flat_map(|(_, s)| s.iter().cloned()).collect();
    if let Some(s) = subjects.difference(&union).next() {
        return Err(Error::Split(format!("subject {s} is in no split")));
    }
    if let Some(s) = union.difference(subjects).next() {
        return Err(Error::Split(format!("subject {s} is not in the manifest")));
    }
    Ok(())
}
