use super::dataset::{build_samples, Normalizer, SampleSet};
use super::{ContactSpec, DataError, Dataset, RawRecording};

/// One leave-one-subject-out fold. `train` and `test` index into the
/// dataset's recordings; the normalizer is fitted on `train` alone.
#[derive(Debug, Clone, PartialEq)]
pub struct Fold {
    pub held_out: String,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub normalizer: Normalizer,
}

impl Fold {
    pub fn train_recordings<'a>(&self, ds: &'a Dataset) -> Vec<&'a RawRecording> {
        self.train.iter().map(|&i| &ds.recordings[i]).collect()
    }

    pub fn test_recordings<'a>(&self, ds: &'a Dataset) -> Vec<&'a RawRecording> {
        self.test.iter().map(|&i| &ds.recordings[i]).collect()
    }

    pub fn train_samples(&self, ds: &Dataset, contact: &ContactSpec, window: usize) -> Result<SampleSet, DataError> {
        build_samples(&self.train_recordings(ds), &self.normalizer, contact, window)
    }

    pub fn test_samples(&self, ds: &Dataset, contact: &ContactSpec, window: usize) -> Result<SampleSet, DataError> {
        build_samples(&self.test_recordings(ds), &self.normalizer, contact, window)
    }
}

pub fn loso_split(ds: &Dataset, held_out: &str) -> Result<Fold, DataError> {
    let subjects = ds.subjects();
    if subjects.len() < 2 {
        return Err(DataError::TooFewSubjects(subjects.len()));
    }
    if !subjects.iter().any(|s| s == held_out) {
        return Err(DataError::UnknownSubject(held_out.to_string()));
    }
    let (test, train): (Vec<usize>, Vec<usize>) =
        (0..ds.recordings.len()).partition(|&i| ds.recordings[i].subject_id == held_out);
    let train_recs: Vec<&RawRecording> = train.iter().map(|&i| &ds.recordings[i]).collect();
    let normalizer = Normalizer::fit(&train_recs)?;
    Ok(Fold {
        held_out: held_out.to_string(),
        train,
        test,
        normalizer,
    })
}

/// One fold per subject, in sorted subject order.
pub fn round_robin(ds: &Dataset) -> Result<Vec<Fold>, DataError> {
    ds.subjects().iter().map(|s| loso_split(ds, s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{generate, SynthConfig};

    fn dataset(subjects: usize) -> Dataset {
        generate(&SynthConfig {
            subjects,
            frames: 6,
            ..Default::default()
        })
    }

    #[test]
    fn held_out_subject_is_the_whole_test_set() {
        let ds = dataset(10);
        let fold = loso_split(&ds, "s03").unwrap();
        assert!(fold.test_recordings(&ds).iter().all(|r| r.subject_id == "s03"));
        let mut train_subjects: Vec<_> = fold
            .train_recordings(&ds)
            .iter()
            .map(|r| r.subject_id.clone())
            .collect();
        train_subjects.dedup();
        assert_eq!(train_subjects.len(), 9);
        assert!(!train_subjects.contains(&"s03".to_string()));
    }

    #[test]
    fn round_robin_partitions_the_windows() {
        let ds = dataset(4);
        let folds = round_robin(&ds).unwrap();
        let mut seen = vec![0usize; ds.recordings.len()];
        for f in &folds {
            for &i in &f.test {
                seen[i] += 1;
            }
            assert!(f.train.iter().all(|i| !f.test.contains(i)));
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn two_subjects_train_on_each_other() {
        let ds = dataset(2);
        let folds = round_robin(&ds).unwrap();
        assert_eq!(folds[0].train, folds[1].test);
        assert_eq!(folds[1].train, folds[0].test);
    }

    #[test]
    fn split_errors() {
        let ds = dataset(1);
        assert!(matches!(loso_split(&ds, "s00"), Err(DataError::TooFewSubjects(1))));
        let ds = dataset(3);
        assert!(matches!(loso_split(&ds, "nobody"), Err(DataError::UnknownSubject(_))));
    }

    #[test]
    fn statistics_come_from_train_only() {
        let ds = dataset(3);
        let fold = loso_split(&ds, "s01").unwrap();
        let refit = Normalizer::fit(&fold.train_recordings(&ds)).unwrap();
        assert_eq!(refit, fold.normalizer);
        let all: Vec<&RawRecording> = ds.recordings.iter().collect();
        assert_ne!(Normalizer::fit(&all).unwrap(), fold.normalizer);
    }
}
