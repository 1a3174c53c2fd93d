//! File formats: latent-instance streams, manifests, timelines, cluster
//! snapshots and key=value config files. All writers are deterministic so
//! identical runs produce byte-identical outputs.

use std::collections::BTreeMap;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::generator::{LatentInstance, StreamSpec};

fn open_reader(path: &Path) -> Result<std::io::BufReader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(std::io::BufReader::new(file))
}

fn create_writer(path: &Path) -> Result<BufWriter<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(BufWriter::new(file))
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

/// Writes instances as `instance,host,f0..f{k-1}[,label]` rows.
///
/// The label column is present whenever the first instance carries labels.
pub fn write_latent_stream(path: &Path, instances: &[LatentInstance]) -> Result<()> {
    let mut w = create_writer(path)?;
    let n_features = instances.first().map_or(0, |i| i.rows.ncols());
    let with_labels = instances.first().is_some_and(|i| i.labels.is_some());
    let mut header = String::from("instance,host");
    for f in 0..n_features {
        header.push_str(&format!(",f{f}"));
    }
    if with_labels {
        header.push_str(",label");
    }
    writeln!(w, "{header}").map_err(io_err(path))?;

    for inst in instances {
        for (host, row) in inst.rows.rows().into_iter().enumerate() {
            let mut line = format!("{},{}", inst.index, host);
            for v in row.iter() {
                line.push(',');
                line.push_str(&v.to_string());
            }
            if with_labels {
                let labels = inst.labels.as_ref().ok_or_else(|| {
                    Error::InvalidInput("labels missing on a later instance".into())
                })?;
                line.push(',');
                line.push_str(&labels[host].to_string());
            }
            writeln!(w, "{line}").map_err(io_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

/// Reads a latent-instance stream written by [`write_latent_stream`].
pub fn read_latent_stream(path: &Path) -> Result<Vec<LatentInstance>> {
    let reader = open_reader(path)?;
    let mut lines = reader.lines().enumerate();

    let header = match lines.next() {
        Some((_, line)) => line.map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?,
        None => return Ok(Vec::new()),
    };
    let columns: Vec<&str> = header.trim().split(',').collect();
    if columns.len() < 3 || columns[0] != "instance" || columns[1] != "host" {
        return Err(Error::Parse {
            line: 1,
            message: format!("unexpected latent stream header {header:?}"),
        });
    }
    let with_labels = *columns.last().unwrap() == "label";
    let n_features = columns.len() - 2 - usize::from(with_labels);
    if n_features == 0 {
        return Err(Error::Parse {
            line: 1,
            message: "latent stream header has no feature columns".into(),
        });
    }

    let mut instances: Vec<LatentInstance> = Vec::new();
    let mut current: Option<(u64, Vec<Vec<f64>>, Vec<usize>)> = None;
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != columns.len() {
            return Err(Error::Parse {
                line: line_no,
                message: format!(
                    "expected {} fields, found {}",
                    columns.len(),
                    fields.len()
                ),
            });
        }
        let parse_f64 = |text: &str, what: &str| -> Result<f64> {
            text.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad {what}: {text:?}"),
            })
        };
        let instance: u64 = fields[0].parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("bad instance index: {:?}", fields[0]),
        })?;
        let mut row = Vec::with_capacity(n_features);
        for f in 0..n_features {
            row.push(parse_f64(fields[2 + f], "feature value")?);
        }
        let label = if with_labels {
            Some(fields[2 + n_features].parse::<usize>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad label: {:?}", fields[2 + n_features]),
            })?)
        } else {
            None
        };

        match &mut current {
            Some((index, rows, labels)) if *index == instance => {
                rows.push(row);
                if let Some(l) = label {
                    labels.push(l);
                }
            }
            _ => {
                if let Some(done) = current.take() {
                    instances.push(finish_instance(done, n_features, with_labels));
                }
                let labels = label.map_or_else(Vec::new, |l| vec![l]);
                current = Some((instance, vec![row], labels));
            }
        }
    }
    if let Some(done) = current.take() {
        instances.push(finish_instance(done, n_features, with_labels));
    }
    Ok(instances)
}

fn finish_instance(
    (index, rows, labels): (u64, Vec<Vec<f64>>, Vec<usize>),
    n_features: usize,
    with_labels: bool,
) -> LatentInstance {
    let data = Array2::from_shape_fn((rows.len(), n_features), |(i, j)| rows[i][j]);
    LatentInstance {
        index,
        rows: data,
        labels: with_labels.then_some(labels),
    }
}

/// Writes the stream manifest: spec fields, seed, the measured distance and
/// the true drift window, one `key=value` per line.
pub fn write_manifest(path: &Path, spec: &StreamSpec, measured_js: f64) -> Result<()> {
    let mut w = create_writer(path)?;
    let mut put = |k: &str, v: String| writeln!(w, "{k}={v}").map_err(io_err(path));
    put("drift_type", spec.drift_type.to_string())?;
    put("drift_duration", spec.drift_duration.to_string())?;
    put("drift_magnitude", spec.drift_magnitude.to_string())?;
    put("drift_precision", spec.drift_precision.to_string())?;
    put("clusters_before", spec.clusters_before.to_string())?;
    put("clusters_after", spec.clusters_after.to_string())?;
    put("latent_features", spec.latent_features.to_string())?;
    put("instance_size", spec.instance_size.to_string())?;
    put("instances_before", spec.instances_before.to_string())?;
    put("total_instances", spec.total_instances.to_string())?;
    put("seed", spec.seed.to_string())?;
    put("measured_js", measured_js.to_string())?;
    put("drift_start", spec.drift_start().to_string())?;
    put("drift_end", spec.drift_end().to_string())?;
    w.flush().map_err(io_err(path))
}

/// Parses any `key=value` file ('#' lines are comments).
pub fn read_key_values(path: &Path) -> Result<BTreeMap<String, String>> {
    let reader = open_reader(path)?;
    let mut map = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed.split_once('=').ok_or_else(|| Error::Parse {
            line: idx + 1,
            message: format!("expected key=value, found {trimmed:?}"),
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn opt_string<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

/// One row of the experiment timeline.
#[derive(Debug, Clone)]
pub struct TimelineRow {
    pub interval: u64,
    pub changed_hosts: usize,
    pub mode: crate::drift::Mode,
    pub decision: crate::drift::Decision,
    pub accuracy_dendrift: Option<f64>,
    pub accuracy_baseline: Option<f64>,
    pub nmf_error: Option<f64>,
}

/// Writes `interval,changed_hosts,mode,decision,accuracy_dendrift,accuracy_baseline,nmf_error`.
pub fn write_timeline(path: &Path, rows: &[TimelineRow]) -> Result<()> {
    let mut w = create_writer(path)?;
    writeln!(
        w,
        "interval,changed_hosts,mode,decision,accuracy_dendrift,accuracy_baseline,nmf_error"
    )
    .map_err(io_err(path))?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.interval,
            r.changed_hosts,
            r.mode,
            r.decision,
            opt_string(&r.accuracy_dendrift),
            opt_string(&r.accuracy_baseline),
            opt_string(&r.nmf_error),
        )
        .map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes the per-interval drift timeline `interval,mode,changed_hosts,decision`.
pub fn write_drift_timeline(path: &Path, rows: &[TimelineRow]) -> Result<()> {
    let mut w = create_writer(path)?;
    writeln!(w, "interval,mode,changed_hosts,decision").map_err(io_err(path))?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.interval, r.mode, r.changed_hosts, r.decision)
            .map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes the cluster snapshot `cluster_id,weight,center_f0..center_f{k-1}`,
/// one row per potential micro-cluster; noise rows use cluster_id = -1.
pub fn write_cluster_snapshot(
    path: &Path,
    model: &crate::denstream::ClusterModel,
    clusters: &crate::denstream::FinalClusters,
) -> Result<()> {
    let mut w = create_writer(path)?;
    let n_features = model.potential().first().map_or(0, |mc| mc.dim());
    let mut header = String::from("cluster_id,weight");
    for f in 0..n_features {
        header.push_str(&format!(",center_f{f}"));
    }
    writeln!(w, "{header}").map_err(io_err(path))?;
    for (mc, &label) in model.potential().iter().zip(&clusters.labels) {
        let mut line = format!("{},{}", label, mc.weight());
        for v in mc.center().iter() {
            line.push(',');
            line.push_str(&v.to_string());
        }
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}
