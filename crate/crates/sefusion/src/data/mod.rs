//! Dataset model: records carrying pre-extracted feature vectors, the eight
//! classification sub-tasks, text-side preprocessing contracts, label priors,
//! and per-split summaries.
//!
//! Feature extraction itself happens upstream (any producer that writes the
//! documented feature-file format); this crate consumes its output.

pub mod format;
pub mod synth;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LabelPrior;
use crate::numerics::matrix::Matrix;

/// Dataset partition tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(format!(
                "unknown split `{other}` (expected train, validation, or test)"
            )),
        }
    }
}

/// The eight distinct classification sub-tasks. The motivational sub-task
/// appears in both the binary and the scale task groups, so `C4` parses as
/// an alias of `B4`.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum TaskId {
    A,
    B1,
    B2,
    B3,
    #[serde(alias = "C4")]
    B4,
    C1,
    C2,
    C3,
}

impl TaskId {
    pub const ALL: [TaskId; 8] = [
        TaskId::A,
        TaskId::B1,
        TaskId::B2,
        TaskId::B3,
        TaskId::B4,
        TaskId::C1,
        TaskId::C2,
        TaskId::C3,
    ];

    /// Sub-tasks of the binary group.
    pub const GROUP_B: [TaskId; 4] = [TaskId::B1, TaskId::B2, TaskId::B3, TaskId::B4];
    /// Sub-tasks of the scale group; its fourth member is the shared
    /// motivational sub-task.
    pub const GROUP_C: [TaskId; 4] = [TaskId::C1, TaskId::C2, TaskId::C3, TaskId::B4];

    pub fn as_str(&self) -> &'static str {
        match self {
            TaskId::A => "A",
            TaskId::B1 => "B1",
            TaskId::B2 => "B2",
            TaskId::B3 => "B3",
            TaskId::B4 => "B4",
            TaskId::C1 => "C1",
            TaskId::C2 => "C2",
            TaskId::C3 => "C3",
        }
    }
}

impl std::fmt::Display for TaskId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TaskId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "A" | "a" => Ok(TaskId::A),
            "B1" | "b1" => Ok(TaskId::B1),
            "B2" | "b2" => Ok(TaskId::B2),
            "B3" | "b3" => Ok(TaskId::B3),
            "B4" | "b4" | "C4" | "c4" => Ok(TaskId::B4),
            "C1" | "c1" => Ok(TaskId::C1),
            "C2" | "c2" => Ok(TaskId::C2),
            "C3" | "c3" => Ok(TaskId::C3),
            other => Err(format!(
                "unknown task `{other}` (expected A, B1-B4, C1-C4)"
            )),
        }
    }
}

/// A sub-task with its class layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TaskSpec {
    pub id: TaskId,
    pub class_count: usize,
    pub label_names: &'static [&'static str],
}

static TASK_SPECS: [TaskSpec; 8] = [
    TaskSpec {
        id: TaskId::A,
        class_count: 3,
        label_names: &["positive", "neutral", "negative"],
    },
    TaskSpec {
        id: TaskId::B1,
        class_count: 2,
        label_names: &["humorous", "not_humorous"],
    },
    TaskSpec {
        id: TaskId::B2,
        class_count: 2,
        label_names: &["sarcastic", "not_sarcastic"],
    },
    TaskSpec {
        id: TaskId::B3,
        class_count: 2,
        label_names: &["offensive", "not_offensive"],
    },
    TaskSpec {
        id: TaskId::B4,
        class_count: 2,
        label_names: &["motivational", "not_motivational"],
    },
    TaskSpec {
        id: TaskId::C1,
        class_count: 4,
        label_names: &["not_funny", "funny", "very_funny", "hilarious"],
    },
    TaskSpec {
        id: TaskId::C2,
        class_count: 4,
        label_names: &["not_sarcastic", "general", "twisted_meaning", "very_twisted"],
    },
    TaskSpec {
        id: TaskId::C3,
        class_count: 4,
        label_names: &["not_offensive", "slight", "very_offensive", "hateful_offensive"],
    },
];

impl TaskSpec {
    pub fn all() -> &'static [TaskSpec; 8] {
        &TASK_SPECS
    }

    pub fn for_task(id: TaskId) -> &'static TaskSpec {
        TASK_SPECS
            .iter()
            .find(|spec| spec.id == id)
            .expect("every task id has a spec")
    }
}

/// One sample: identifier, split, the two feature vectors, and whatever
/// sub-task labels it carries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub split: Split,
    pub labels: BTreeMap<TaskId, usize>,
    pub text_features: Vec<f64>,
    pub image_features: Vec<f64>,
}

/// Records with uniform feature widths.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Dataset {
    pub text_dim: usize,
    pub image_dim: usize,
    pub records: Vec<Record>,
}

impl Dataset {
    pub fn new(text_dim: usize, image_dim: usize, records: Vec<Record>) -> Result<Self> {
        let mut seen = HashSet::new();
        for record in records.iter() {
            if record.text_features.len() != text_dim {
                return Err(Error::data(format!(
                    "record `{}` has a {}-wide text vector, expected {}",
                    record.id,
                    record.text_features.len(),
                    text_dim
                )));
            }
            if record.image_features.len() != image_dim {
                return Err(Error::data(format!(
                    "record `{}` has a {}-wide image vector, expected {}",
                    record.id,
                    record.image_features.len(),
                    image_dim
                )));
            }
            for (&task, &label) in &record.labels {
                let spec = TaskSpec::for_task(task);
                if label >= spec.class_count {
                    return Err(Error::data(format!(
                        "record `{}` labels task {task} with class {label}, but it has {} classes",
                        record.id, spec.class_count
                    )));
                }
            }
            if !seen.insert(record.id.clone()) {
                return Err(Error::data(format!("duplicate record id `{}`", record.id)));
            }
        }
        Ok(Dataset {
            text_dim,
            image_dim,
            records,
        })
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn split_len(&self, split: Split) -> usize {
        self.split(split).count()
    }

    /// Records in `split` that carry a label for `task`.
    pub fn labeled(&self, task: TaskId, split: Split) -> Vec<(&Record, usize)> {
        self.split(split)
            .filter_map(|r| r.labels.get(&task).map(|&label| (r, label)))
            .collect()
    }

    /// Stacks the given records into batched feature matrices
    /// (one sample per row).
    pub fn feature_batch(&self, records: &[&Record]) -> (Matrix<f64>, Matrix<f64>) {
        let mut text = Vec::with_capacity(records.len() * self.text_dim);
        let mut image = Vec::with_capacity(records.len() * self.image_dim);
        for r in records {
            text.extend_from_slice(&r.text_features);
            image.extend_from_slice(&r.image_features);
        }
        (
            Matrix::from_vec(records.len(), self.text_dim, text).expect("uniform widths"),
            Matrix::from_vec(records.len(), self.image_dim, image).expect("uniform widths"),
        )
    }
}

/// Replaces user mentions and links with generic tokens.
///
/// A token is a maximal run of non-whitespace characters. Tokens whose first
/// character is `@` (followed by at least one more character) become
/// `@user`; tokens starting with `http://`, `https://`, or `www.`
/// (ASCII-case-insensitive) become `http`. Everything else, including all
/// whitespace, is preserved exactly. Applying the function twice equals
/// applying it once.
pub fn preprocess_text(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut token = String::new();
    for ch in raw.chars() {
        if ch.is_whitespace() {
            flush_token(&mut out, &token);
            token.clear();
            out.push(ch);
        } else {
            token.push(ch);
        }
    }
    flush_token(&mut out, &token);
    out
}

fn flush_token(out: &mut String, token: &str) {
    if token.is_empty() {
        return;
    }
    if token.starts_with('@') && token.chars().count() > 1 {
        out.push_str("@user");
    } else if has_ascii_prefix(token, "http://")
        || has_ascii_prefix(token, "https://")
        || has_ascii_prefix(token, "www.")
    {
        out.push_str("http");
    } else {
        out.push_str(token);
    }
}

fn has_ascii_prefix(token: &str, prefix: &str) -> bool {
    token
        .get(..prefix.len())
        .is_some_and(|head| head.eq_ignore_ascii_case(prefix))
}

/// Column-wise mean of a T×D matrix of per-token features.
pub fn average_pool(token_features: &Matrix<f64>) -> Result<Matrix<f64>> {
    let rows = token_features.rows();
    if rows == 0 {
        return Err(Error::usage("average_pool needs at least one token row"));
    }
    let cols = token_features.cols();
    let mut out = Matrix::zeros(1, cols);
    for r in 0..rows {
        for c in 0..cols {
            out.set(0, c, out.get(0, c) + token_features.get(r, c));
        }
    }
    Ok(out.scale(1.0 / rows as f64))
}

/// v / max(‖v‖₂, 1e-12); the zero vector maps to itself.
pub fn l2_normalize(v: &Matrix<f64>) -> Matrix<f64> {
    let norm = v.data().iter().map(|x| x * x).sum::<f64>().sqrt();
    v.scale(1.0 / norm.max(1e-12))
}

/// Class counts and probabilities for `task` over one split.
pub fn compute_priors(dataset: &Dataset, task: TaskId, split: Split) -> Result<LabelPrior> {
    let spec = TaskSpec::for_task(task);
    let labeled = dataset.labeled(task, split);
    if labeled.is_empty() {
        return Err(Error::usage(format!(
            "split `{split}` has no labels for task {task}"
        )));
    }
    let mut counts = vec![0u64; spec.class_count];
    for (_, label) in labeled {
        counts[label] += 1;
    }
    LabelPrior::from_counts(counts)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTally {
    pub count: u64,
    /// Share of the split, rounded half-up to a whole percent.
    pub percent: u32,
}

/// Per-task, per-split class counts with whole-percent shares.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub split_sizes: BTreeMap<Split, u64>,
    pub tasks: BTreeMap<TaskId, BTreeMap<Split, Vec<ClassTally>>>,
}

fn percent_half_up(count: u64, total: u64) -> u32 {
    if total == 0 {
        return 0;
    }
    ((200 * count + total) / (2 * total)) as u32
}

pub fn summarize(dataset: &Dataset) -> DatasetSummary {
    let mut summary = DatasetSummary::default();
    for split in Split::ALL {
        summary
            .split_sizes
            .insert(split, dataset.split_len(split) as u64);
    }
    for spec in TaskSpec::all() {
        let mut per_split = BTreeMap::new();
        let mut any = false;
        for split in Split::ALL {
            let labeled = dataset.labeled(spec.id, split);
            if labeled.is_empty() {
                continue;
            }
            any = true;
            let mut counts = vec![0u64; spec.class_count];
            for (_, label) in &labeled {
                counts[*label] += 1;
            }
            let total: u64 = counts.iter().sum();
            per_split.insert(
                split,
                counts
                    .iter()
                    .map(|&count| ClassTally {
                        count,
                        percent: percent_half_up(count, total),
                    })
                    .collect(),
            );
        }
        if any {
            summary.tasks.insert(spec.id, per_split);
        }
    }
    summary
}

fn thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

/// Plain-text rendering of a summary, one task block at a time.
pub fn render_summary(summary: &DatasetSummary) -> String {
    let mut out = String::new();
    out.push_str("split sizes:");
    for split in Split::ALL {
        let size = summary.split_sizes.get(&split).copied().unwrap_or(0);
        out.push_str(&format!(" {split}={}", thousands(size)));
    }
    out.push('\n');
    for (task, per_split) in &summary.tasks {
        let spec = TaskSpec::for_task(*task);
        out.push_str(&format!("task {task}:\n"));
        for split in Split::ALL {
            let Some(tallies) = per_split.get(&split) else {
                continue;
            };
            let cells: Vec<String> = tallies
                .iter()
                .zip(spec.label_names)
                .map(|(t, name)| format!("{name}={}({}%)", thousands(t.count), t.percent))
                .collect();
            out.push_str(&format!("  {split:<10} {}\n", cells.join(" / ")));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(id: &str, split: Split, task: TaskId, label: usize) -> Record {
        Record {
            id: id.to_string(),
            split,
            labels: BTreeMap::from([(task, label)]),
            text_features: vec![0.0],
            image_features: vec![0.0],
        }
    }

    fn counted_dataset(task: TaskId, split: Split, counts: &[u64]) -> Dataset {
        let mut records = Vec::new();
        for (class, &count) in counts.iter().enumerate() {
            for i in 0..count {
                records.push(record(
                    &format!("{split}-{class}-{i}"),
                    split,
                    task,
                    class,
                ));
            }
        }
        Dataset::new(1, 1, records).unwrap()
    }

    #[test]
    fn c4_is_an_alias_of_b4() {
        assert_eq!("C4".parse::<TaskId>().unwrap(), TaskId::B4);
        assert_eq!(TaskId::ALL.len(), 8);
        assert_eq!(TaskId::GROUP_C[3], TaskId::B4);
        let from_json: TaskId = serde_json::from_str("\"C4\"").unwrap();
        assert_eq!(from_json, TaskId::B4);
    }

    #[test]
    fn task_specs_have_expected_class_counts() {
        assert_eq!(TaskSpec::for_task(TaskId::A).class_count, 3);
        for id in TaskId::GROUP_B {
            assert_eq!(TaskSpec::for_task(id).class_count, 2);
        }
        for id in [TaskId::C1, TaskId::C2, TaskId::C3] {
            assert_eq!(TaskSpec::for_task(id).class_count, 4);
        }
        assert_eq!(TaskSpec::for_task(TaskId::A).label_names[1], "neutral");
    }

    #[test]
    fn preprocess_pinned_cases() {
        let cases: [(&str, &str); 20] = [
            ("lol @Bob123 see www.memes.com/x", "lol @user see http"),
            ("", ""),
            ("email a@b.c stays", "email a@b.c stays"),
            ("@user", "@user"),
            ("@", "@"),
            ("@@wow", "@user"),
            ("http://example.com/a?b=c", "http"),
            ("https://EXAMPLE.com", "http"),
            ("HTTP://x", "http"),
            ("www.site.org", "http"),
            ("wwww.site.org", "wwww.site.org"),
            ("say www.", "say http"),
            ("  @a  b  ", "  @user  b  "),
            ("a\t@b\nwww.c", "a\t@user\nhttp"),
            ("@名前", "@user"),
            ("(@name)", "(@name)"),
            ("http:/broken", "http:/broken"),
            ("see HTTPS://a and @B", "see http and @user"),
            ("@a @b @c", "@user @user @user"),
            ("no-op text here", "no-op text here"),
        ];
        for (input, expected) in cases {
            assert_eq!(preprocess_text(input), expected, "input {input:?}");
            // Idempotence on every pinned case.
            assert_eq!(preprocess_text(expected), expected);
        }
    }

    #[test]
    fn preprocess_matches_reference_regex_rules() {
        // Rule-application oracle: tokenize on whitespace and apply the two
        // replacement rules expressed independently.
        let oracle = |raw: &str| -> String {
            let mut out = String::new();
            let mut rest = raw;
            while !rest.is_empty() {
                let ws_end = rest
                    .find(|c: char| !c.is_whitespace())
                    .unwrap_or(rest.len());
                out.push_str(&rest[..ws_end]);
                rest = &rest[ws_end..];
                if rest.is_empty() {
                    break;
                }
                let tok_end = rest.find(char::is_whitespace).unwrap_or(rest.len());
                let token = &rest[..tok_end];
                rest = &rest[tok_end..];
                let lower = token.to_lowercase();
                if token.starts_with('@') && token.chars().count() > 1 {
                    out.push_str("@user");
                } else if lower.starts_with("http://")
                    || lower.starts_with("https://")
                    || lower.starts_with("www.")
                {
                    out.push_str("http");
                } else {
                    out.push_str(token);
                }
            }
            out
        };
        for input in [
            "lol @Bob123 see www.memes.com/x",
            "mixed WWW.a @x http://b c@d",
            " leading and trailing ",
            "@@ @ a@ @a",
        ] {
            assert_eq!(preprocess_text(input), oracle(input), "input {input:?}");
        }
    }

    #[test]
    fn average_pool_cases() {
        let single = Matrix::from_vec(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(average_pool(&single).unwrap(), single);

        let sym = Matrix::from_vec(2, 2, vec![1.0, -2.0, -1.0, 2.0]).unwrap();
        assert_eq!(average_pool(&sym).unwrap().data(), &[0.0, 0.0]);

        let m = Matrix::from_vec(3, 4, (1..=12).map(|v| v as f64).collect()).unwrap();
        let pooled = average_pool(&m).unwrap();
        for c in 0..4 {
            let mean = (m.get(0, c) + m.get(1, c) + m.get(2, c)) / 3.0;
            assert!((pooled.get(0, c) - mean).abs() < 1e-15);
        }

        assert!(average_pool(&Matrix::zeros(0, 4)).is_err());
    }

    #[test]
    fn l2_normalize_cases() {
        let v = l2_normalize(&Matrix::row(&[3.0, 4.0]));
        assert!((v.get(0, 0) - 0.6).abs() < 1e-15);
        assert!((v.get(0, 1) - 0.8).abs() < 1e-15);

        let unit = Matrix::row(&[0.6, 0.8]);
        let renorm = l2_normalize(&unit);
        for (a, b) in renorm.data().iter().zip(unit.data()) {
            assert!((a - b).abs() < 1e-12);
        }

        let zero = Matrix::row(&[0.0, 0.0, 0.0]);
        assert_eq!(l2_normalize(&zero), zero);
    }

    #[test]
    fn priors_from_published_task_a_counts() {
        let ds = counted_dataset(TaskId::A, Split::Train, &[2275, 2970, 1755]);
        let prior = compute_priors(&ds, TaskId::A, Split::Train).unwrap();
        assert_eq!(prior.counts, vec![2275, 2970, 1755]);
        assert!((prior.probabilities[0] - 0.325).abs() < 1e-12);
        assert!((prior.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(prior.argmax(), 1); // neutral
    }

    #[test]
    fn priors_from_published_motivational_counts() {
        let ds = counted_dataset(TaskId::B4, Split::Train, &[830, 6170]);
        let prior = compute_priors(&ds, TaskId::B4, Split::Train).unwrap();
        assert_eq!(prior.counts, vec![830, 6170]);
        assert_eq!(prior.argmax(), 1);
    }

    #[test]
    fn single_class_split_gets_probability_one() {
        let ds = counted_dataset(TaskId::B1, Split::Train, &[4, 0]);
        let prior = compute_priors(&ds, TaskId::B1, Split::Train).unwrap();
        assert_eq!(prior.probabilities, vec![1.0, 0.0]);
    }

    #[test]
    fn priors_error_on_empty_split() {
        let ds = counted_dataset(TaskId::A, Split::Train, &[1, 1, 1]);
        assert!(compute_priors(&ds, TaskId::A, Split::Test).is_err());
    }

    #[test]
    fn summary_reproduces_published_task_a_row() {
        let ds = counted_dataset(TaskId::A, Split::Train, &[2275, 2970, 1755]);
        let summary = summarize(&ds);
        let tallies = &summary.tasks[&TaskId::A][&Split::Train];
        assert_eq!(
            tallies,
            &vec![
                ClassTally { count: 2275, percent: 33 },
                ClassTally { count: 2970, percent: 42 },
                ClassTally { count: 1755, percent: 25 },
            ]
        );
        let rendered = render_summary(&summary);
        assert!(rendered.contains("positive=2,275(33%)"), "{rendered}");
        assert!(rendered.contains("neutral=2,970(42%)"), "{rendered}");
        assert!(rendered.contains("negative=1,755(25%)"), "{rendered}");
    }

    #[test]
    fn summary_of_empty_dataset_is_empty() {
        let ds = Dataset::new(4, 2, Vec::new()).unwrap();
        let summary = summarize(&ds);
        assert!(summary.tasks.is_empty());
        assert_eq!(summary.split_sizes[&Split::Train], 0);
    }

    #[test]
    fn dataset_rejects_width_mismatch_and_duplicates() {
        let mut bad = record("x", Split::Train, TaskId::A, 0);
        bad.text_features = vec![0.0, 0.0];
        assert!(Dataset::new(1, 1, vec![bad]).is_err());

        let a = record("same", Split::Train, TaskId::A, 0);
        let b = record("same", Split::Test, TaskId::A, 1);
        let err = Dataset::new(1, 1, vec![a, b]).unwrap_err();
        assert!(err.to_string().contains("same"), "{err}");

        let out_of_range = record("y", Split::Train, TaskId::B1, 2);
        assert!(Dataset::new(1, 1, vec![out_of_range]).is_err());
    }

    proptest! {
        #[test]
        fn preprocess_is_idempotent(raw in "\\PC{0,40}") {
            let once = preprocess_text(&raw);
            prop_assert_eq!(preprocess_text(&once), once.clone());
        }

        #[test]
        fn priors_are_order_invariant(labels in proptest::collection::vec(0usize..3, 1..30)) {
            let forward: Vec<Record> = labels
                .iter()
                .enumerate()
                .map(|(i, &l)| record(&format!("r{i}"), Split::Train, TaskId::A, l))
                .collect();
            let mut reversed = forward.clone();
            reversed.reverse();
            let p1 = compute_priors(
                &Dataset::new(1, 1, forward).unwrap(),
                TaskId::A,
                Split::Train,
            ).unwrap();
            let p2 = compute_priors(
                &Dataset::new(1, 1, reversed).unwrap(),
                TaskId::A,
                Split::Train,
            ).unwrap();
            prop_assert_eq!(p1, p2);
        }

        #[test]
        fn summary_percentages_sum_near_hundred(labels in proptest::collection::vec(0usize..4, 1..60)) {
            let records: Vec<Record> = labels
                .iter()
                .enumerate()
                .map(|(i, &l)| record(&format!("r{i}"), Split::Train, TaskId::C1, l))
                .collect();
            let summary = summarize(&Dataset::new(1, 1, records).unwrap());
            let total: u32 = summary.tasks[&TaskId::C1][&Split::Train]
                .iter()
                .map(|t| t.percent)
                .sum();
            prop_assert!((98..=102).contains(&total), "total {total}");
        }
    }
}
