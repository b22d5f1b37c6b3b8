//! Dataset directories.
//!
//! ```text
//! meta.tsv      n<TAB>d<TAB>c
//! edges.tsv     u<TAB>v per line, undirected
//! features.tsv  d space-separated values per node, in node order
//! labels.tsv    one label per node, -1 = unlabeled
//! train.txt     node ids, one per line
//! test.txt      node ids, one per line
//! ```
//!
//! Lines starting with `#` and blank lines are ignored in every file.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::{load_graph, Graph, GraphFiles};
use crate::textio::{data_lines, parse_error, parse_field};

/// Preprocessing applied to feature rows after loading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureNorm {
    None,
    /// Divide each row by its sum; all-zero rows stay zero.
    #[default]
    Row,
}

impl FeatureNorm {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Row => "row",
        }
    }

    pub fn apply(self, features: &mut DenseMatrix) {
        if self == Self::Row {
            for i in 0..features.rows() {
                let row = features.row_mut(i);
                let sum: f64 = row.iter().sum();
                if sum != 0.0 {
                    row.iter_mut().for_each(|v| *v /= sum);
                }
            }
        }
    }
}

impl FromStr for FeatureNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "none" => Ok(Self::None),
            "row" => Ok(Self::Row),
            other => Err(Error::Config(format!("unknown feature_norm {other:?} (expected none or row)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Meta {
    pub n: usize,
    pub d: usize,
    pub c: usize,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub graph: Graph,
    /// `n × d`, row `i` owned by client `i`.
    pub features: DenseMatrix,
}

impl Dataset {
    pub fn meta(&self) -> Meta {
        Meta {
            n: self.graph.num_nodes(),
            d: self.features.cols(),
            c: self.graph.num_classes(),
        }
    }
}

pub fn read_meta(dir: &Path) -> Result<Meta> {
    let path = dir.join("meta.tsv");
    let lines = data_lines(&path)?;
    let Some((line, text)) = lines.first() else {
        return Err(parse_error(&path, 0, "empty meta.tsv"));
    };
    let fields: Vec<&str> = text.split_whitespace().collect();
    if fields.len() != 3 {
        return Err(parse_error(&path, *line, "expected `n<TAB>d<TAB>c`"));
    }
    Ok(Meta {
        n: parse_field(&path, *line, fields[0], "n")?,
        d: parse_field(&path, *line, fields[1], "d")?,
        c: parse_field(&path, *line, fields[2], "c")?,
    })
}

pub fn load_dataset(dir: &Path, norm: FeatureNorm) -> Result<Dataset> {
    let meta = read_meta(dir)?;
    let (edges, labels, train, test) = (
        dir.join("edges.tsv"),
        dir.join("labels.tsv"),
        dir.join("train.txt"),
        dir.join("test.txt"),
    );
    let graph = load_graph(
        GraphFiles {
            edges: &edges,
            labels: &labels,
            train: &train,
            test: &test,
        },
        meta.n,
        Some(meta.c),
    )?
    .with_feature_dim(meta.d);
    let mut features = read_features(&dir.join("features.tsv"), meta.n, meta.d)?;
    norm.apply(&mut features);
    Ok(Dataset { graph, features })
}

fn read_features(path: &Path, n: usize, d: usize) -> Result<DenseMatrix> {
    let lines = data_lines(path)?;
    if lines.len() != n {
        return Err(parse_error(
            path,
            lines.last().map_or(0, |l| l.0),
            format!("{} feature rows for {n} nodes", lines.len()),
        ));
    }
    let mut data = Vec::with_capacity(n * d);
    for (line, text) in &lines {
        let before = data.len();
        for tok in text.split_whitespace() {
            let v: f64 = parse_field(path, *line, tok, "feature")?;
            if !v.is_finite() {
                return Err(parse_error(path, *line, "non-finite feature"));
            }
            data.push(v);
        }
        if data.len() - before != d {
            return Err(parse_error(
                path,
                *line,
                format!("{} features, expected {d}", data.len() - before),
            ));
        }
    }
    DenseMatrix::from_vec(n, d, data)
}

/// Writes `graph` and `features` in the directory format above.
pub fn write_dataset(dir: &Path, graph: &Graph, features: &DenseMatrix) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, body: String| {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))
    };
    write(
        "meta.tsv",
        format!("{}\t{}\t{}\n", graph.num_nodes(), features.cols(), graph.num_classes()),
    )?;
    let mut s = String::new();
    for &(u, v) in graph.edges() {
        let _ = writeln!(s, "{u}\t{v}");
    }
    write("edges.tsv", s)?;
    let mut s = String::new();
    for row in features.iter_rows() {
        let mut first = true;
        for v in row {
            if !first {
                s.push(' ');
            }
            first = false;
            let _ = write!(s, "{v}");
        }
        s.push('\n');
    }
    write("features.tsv", s)?;
    let mut s = String::new();
    for y in graph.labels() {
        match y {
            Some(y) => {
                let _ = writeln!(s, "{y}");
            }
            None => s.push_str("-1\n"),
        }
    }
    write("labels.tsv", s)?;
    let ids = |m: &[usize]| m.iter().map(|i| format!("{i}\n")).collect::<String>();
    write("train.txt", ids(graph.train_mask()))?;
    write("test.txt", ids(graph.test_mask()))
}
