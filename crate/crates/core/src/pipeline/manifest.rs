//! Manifest construction and JSON-lines persistence.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{PipelineError, ReplicationPolicy, Result};
use crate::dataset::Catalog;

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestDataset {
    pub name: String,
    pub count: u64,
    pub factor: u32,
}

/// `dataset` indexes [`TrainingManifest::datasets`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ManifestEntry {
    pub dataset: u16,
    pub index: u32,
    pub copy: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingManifest {
    pub datasets: Vec<ManifestDataset>,
    pub entries: Vec<ManifestEntry>,
    pub policy: ReplicationPolicy,
    pub catalog_hash: String,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    catalog_hash: String,
    policy: ReplicationPolicy,
    datasets: Vec<ManifestDataset>,
    total: u64,
}

#[derive(Serialize, Deserialize)]
struct Line<'a> {
    dataset: &'a str,
    index: u64,
    copy: u32,
}

fn covered(catalog: &Catalog, policy: &ReplicationPolicy) -> Result<Vec<ManifestDataset>> {
    for name in policy.factors.keys() {
        if catalog.get(name).is_none() {
            return Err(PipelineError::UnknownDataset(name.clone()));
        }
    }
    let mut out = Vec::new();
    for d in &catalog.datasets {
        if let Some(factor) = policy.factor(&d.name) {
            if factor == 0 {
                return Err(PipelineError::ZeroFactor(d.name.clone()));
            }
            out.push(ManifestDataset {
                name: d.name.clone(),
                count: d.count,
                factor,
            });
        }
    }
    if out.is_empty() {
        return Err(PipelineError::EmptyManifest);
    }
    Ok(out)
}

/// Entries in catalog order, then sample index, then copy.
pub fn build_manifest(catalog: &Catalog, policy: &ReplicationPolicy) -> Result<TrainingManifest> {
    let datasets = covered(catalog, policy)?;
    if datasets.len() > u16::MAX as usize {
        return Err(PipelineError::TooLarge("catalog".into()));
    }
    let mut total = 0u64;
    for d in &datasets {
        if d.count > u32::MAX as u64 {
            return Err(PipelineError::TooLarge(d.name.clone()));
        }
        total += d.count * d.factor as u64;
    }
    if total > u32::MAX as u64 {
        return Err(PipelineError::TooLarge("manifest".into()));
    }
    let mut entries = Vec::with_capacity(total as usize);
    for (di, d) in datasets.iter().enumerate() {
        for index in 0..d.count as u32 {
            for copy in 0..d.factor {
                entries.push(ManifestEntry {
                    dataset: di as u16,
                    index,
                    copy,
                });
            }
        }
    }
    Ok(TrainingManifest {
        datasets,
        entries,
        policy: policy.clone(),
        catalog_hash: catalog.snapshot_hash(),
    })
}

/// `count_i * factor_i / total` per covered dataset, in catalog order.
pub fn expected_proportions(catalog: &Catalog, policy: &ReplicationPolicy) -> Result<Vec<(String, f64)>> {
    let datasets = covered(catalog, policy)?;
    let total: u64 = datasets.iter().map(|d| d.count * d.factor as u64).sum();
    Ok(datasets
        .into_iter()
        .map(|d| {
            let share = (d.count * d.factor as u64) as f64 / total as f64;
            (d.name, share)
        })
        .collect())
}

impl TrainingManifest {
    pub fn total(&self) -> u64 {
        self.entries.len() as u64
    }

    pub fn dataset_name(&self, e: &ManifestEntry) -> &str {
        &self.datasets[e.dataset as usize].name
    }

    /// Entries per dataset, in manifest dataset order.
    pub fn counts(&self) -> Vec<u64> {
        let mut c = vec![0u64; self.datasets.len()];
        for e in &self.entries {
            c[e.dataset as usize] += 1;
        }
        c
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Header {
            format_version: MANIFEST_FORMAT_VERSION,
            catalog_hash: self.catalog_hash.clone(),
            policy: self.policy.clone(),
            datasets: self.datasets.clone(),
            total: self.total(),
        };
        serde_json::to_writer(&mut w, &header).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
        for e in &self.entries {
            let line = Line {
                dataset: self.dataset_name(e),
                index: e.index as u64,
                copy: e.copy,
            };
            serde_json::to_writer(&mut w, &line).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn entry_json(&self, e: &ManifestEntry) -> String {
        serde_json::to_string(&Line {
            dataset: self.dataset_name(e),
            index: e.index as u64,
            copy: e.copy,
        })
        .expect("entry serialises")
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let bad = |line: usize, message: String| PipelineError::Format { line, message };
        let mut lines = r.lines();
        let first = lines.next().ok_or_else(|| bad(1, "empty file".into()))??;
        let header: Header = serde_json::from_str(&first).map_err(|e| bad(1, e.to_string()))?;
        if header.format_version != MANIFEST_FORMAT_VERSION {
            return Err(bad(1, format!("unsupported format_version {}", header.format_version)));
        }
        let mut entries = Vec::with_capacity(header.total.min(u32::MAX as u64) as usize);
        for (i, line) in lines.enumerate() {
            let n = i + 2;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let l: Line = serde_json::from_str(&line).map_err(|e| bad(n, e.to_string()))?;
            let di = header
                .datasets
                .iter()
                .position(|d| d.name == l.dataset)
                .ok_or_else(|| bad(n, format!("dataset `{}` not in header", l.dataset)))?;
            let d = &header.datasets[di];
            if l.index >= d.count || l.copy >= d.factor {
                return Err(bad(n, format!("entry outside {} (count {}, factor {})", d.name, d.count, d.factor)));
            }
            entries.push(ManifestEntry {
                dataset: di as u16,
                index: l.index as u32,
                copy: l.copy,
            });
        }
        if entries.len() as u64 != header.total {
            return Err(bad(0, format!("header total {} but {} entries", header.total, entries.len())));
        }
        Ok(Self {
            datasets: header.datasets,
            entries,
            policy: header.policy,
            catalog_hash: header.catalog_hash,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{self, pretraining_datasets, DataKind, DatasetDescriptor, ReaderKind};
    use proptest::prelude::*;

    #[test]
    fn published_totals() {
        let c = Catalog::reference();
        assert_eq!(build_manifest(&c, &ReplicationPolicy::pretrain()).unwrap().total(), 964_741);
        let names: Vec<String> = pretraining_datasets().into_iter().map(|d| d.name).collect();
        let ones = ReplicationPolicy::uniform(names.iter().map(String::as_str));
        assert_eq!(build_manifest(&c, &ones).unwrap().total(), 643_963);
        assert_eq!(build_manifest(&c, &ReplicationPolicy::finetune()).unwrap().total(), 1_745);
    }

    #[test]
    fn order_is_catalog_index_copy() {
        let mut c = Catalog::empty();
        c.upsert(DatasetDescriptor::new("b", DataKind::Synthetic, 2, ReaderKind::TwoView));
        c.upsert(DatasetDescriptor::new("a", DataKind::Synthetic, 1, ReaderKind::TwoView));
        let p = ReplicationPolicy::new([("a".to_string(), 1), ("b".to_string(), 2)].into()).unwrap();
        let m = build_manifest(&c, &p).unwrap();
        let got: Vec<(u16, u32, u32)> = m.entries.iter().map(|e| (e.dataset, e.index, e.copy)).collect();
        assert_eq!(got, vec![(0, 0, 0), (0, 0, 1), (0, 1, 0), (0, 1, 1), (1, 0, 0)]);
        assert_eq!(m.datasets[0].name, "b");
    }

    #[test]
    fn unknown_dataset_rejected() {
        let mut p = ReplicationPolicy::pretrain();
        p.factors.insert("Nope".into(), 1);
        assert!(matches!(
            build_manifest(&Catalog::reference(), &p),
            Err(PipelineError::UnknownDataset(n)) if n == "Nope"
        ));
    }

    #[test]
    fn proportions_examples() {
        let c = Catalog::reference();
        let p = expected_proportions(&c, &ReplicationPolicy::pretrain()).unwrap();
        let get = |n: &str| p.iter().find(|(k, _)| k == n).unwrap().1;
        assert!((get(dataset::TARTANAIR) - 306637.0 / 964741.0).abs() < 1e-15);
        assert!((get(dataset::HRVS) - 0.0202).abs() < 5e-5);
        assert!((p.iter().map(|(_, v)| v).sum::<f64>() - 1.0).abs() < 1e-12);
        let single = expected_proportions(&c, &ReplicationPolicy::uniform([dataset::SINTEL])).unwrap();
        assert_eq!(single, vec![(dataset::SINTEL.to_string(), 1.0)]);
    }

    #[test]
    fn jsonl_roundtrip() {
        let c = Catalog::reference();
        let m = build_manifest(&c, &ReplicationPolicy::finetune()).unwrap();
        let mut buf = Vec::new();
        m.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("{\"format_version\":1,"));
        assert_eq!(text.lines().nth(1).unwrap(), r#"{"dataset":"KITTI-2015","index":0,"copy":0}"#);
        assert_eq!(TrainingManifest::read_jsonl(&buf[..]).unwrap(), m);
        let cut = text.lines().take(10).collect::<Vec<_>>().join("\n");
        assert!(TrainingManifest::read_jsonl(cut.as_bytes()).is_err());
    }

    fn arb_catalog() -> impl Strategy<Value = (Catalog, ReplicationPolicy)> {
        proptest::collection::vec((1u64..500, 1u32..30, any::<bool>()), 1..8).prop_map(|spec| {
            let mut c = Catalog::empty();
            let mut f = std::collections::BTreeMap::new();
            for (i, (count, factor, used)) in spec.iter().enumerate() {
                let name = format!("d{i}");
                c.upsert(DatasetDescriptor::new(&name, DataKind::Synthetic, *count, ReaderKind::TwoView));
                if *used || i == 0 {
                    f.insert(name, *factor);
                }
            }
            (c, ReplicationPolicy::new(f).unwrap())
        })
    }

    proptest! {
        #[test]
        fn total_matches_closed_form((c, p) in arb_catalog()) {
            let m = build_manifest(&c, &p).unwrap();
            let mut sum = 0u64;
            for d in &c.datasets {
                if let Some(f) = p.factors.get(&d.name) {
                    sum += d.count * *f as u64;
                }
            }
            prop_assert_eq!(m.total(), sum);
            prop_assert!(m.entries.windows(2).all(|w| w[0] < w[1]));
        }

        #[test]
        fn proportions_scale_invariant((c, p) in arb_catalog(), k in 1u32..20) {
            let a = expected_proportions(&c, &p).unwrap();
            let b = expected_proportions(&c, &p.scaled(k)).unwrap();
            for ((_, x), (_, y)) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-15);
            }
        }
    }
}
