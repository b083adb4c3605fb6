//! Serialized model bundle holding every trained component.
//!
//! ```text
//! magic     8 bytes "PCRFMODL"
//! version   u16
//! metadata  u64 length + JSON (hyperparameters, ranges, window, bins)
//! sections  u8 tag, then payload; tag 0 ends the bundle
//!   1 static forest          forest
//!   2 full pairwise forest   forest
//!   3 conditional bank       u32 cells, then u32 source, u32 bin, forest
//!   4 multi-view static      u32 cells, then u32 bin, forest
//!   5 pose sampler
//!   6 multi-view bank        as 3
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Feature, ThresholdRanges};
use crate::forest::codec::{self, Reader};
use crate::forest::{Forest, GrowthReport};
use crate::frame::{LabelSet, LandmarkLayout};
use crate::inference::{ModelKind, ModelRef, WindowConfig};
use crate::params::HyperParams;
use crate::pose::{PoseBinTable, PoseSampler};
use crate::training::{CellKey, ConditionalBank, StaticBank, TrainedForest};

pub const MODEL_MAGIC: &[u8; 8] = b"PCRFMODL";
pub const MODEL_VERSION: u16 = 1;

#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub layout: LandmarkLayout,
    pub labels: LabelSet,
    pub window: WindowConfig,
    pub static_forest: Option<TrainedForest>,
    pub full: Option<TrainedForest>,
    pub bank: Option<ConditionalBank>,
    pub multiview_bank: Option<ConditionalBank>,
    pub multiview_static: Option<StaticBank>,
    pub sampler: Option<PoseSampler>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Part {
    hp: HyperParams,
    ranges: ThresholdRanges,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Metadata {
    layout: LandmarkLayout,
    labels: LabelSet,
    window: WindowConfig,
    static_forest: Option<Part>,
    full: Option<Part>,
    bank: Option<(Part, PoseBinTable, Vec<CellKey>)>,
    #[serde(default)]
    multiview_bank: Option<(Part, PoseBinTable, Vec<CellKey>)>,
    multiview_static: Option<(Part, PoseBinTable, Vec<usize>)>,
}

impl ModelBundle {
    pub fn new(layout: LandmarkLayout, labels: LabelSet, window: WindowConfig) -> Self {
        ModelBundle {
            layout,
            labels,
            window,
            static_forest: None,
            full: None,
            bank: None,
            multiview_bank: None,
            multiview_static: None,
            sampler: None,
        }
    }

    /// Whether any component samples the image-channel templates.
    pub fn uses_appearance(&self) -> bool {
        let hp = [
            self.static_forest.as_ref().map(|t| &t.hp),
            self.full.as_ref().map(|t| &t.hp),
            self.bank.as_ref().map(|b| &b.hp),
            self.multiview_bank.as_ref().map(|b| &b.hp),
            self.multiview_static.as_ref().map(|b| &b.hp),
        ];
        hp.into_iter()
            .flatten()
            .any(|h| h.counts[2] > 0 || h.counts[5] > 0)
    }

    /// Models that can run with the components present.
    pub fn available(&self) -> Vec<ModelKind> {
        ModelKind::ALL
            .into_iter()
            .filter(|&k| self.model(k).is_ok())
            .collect()
    }

    /// Borrowed model of the given kind.
    pub fn model(&self, kind: ModelKind) -> Result<ModelRef<'_>> {
        let missing =
            |what: &str| Error::Config(format!("model bundle has no {what} for {}", kind.name()));
        let init = || {
            self.static_forest
                .as_ref()
                .map(|t| &t.forest)
                .ok_or_else(|| missing("static forest"))
        };
        let mv = || {
            self.multiview_static
                .as_ref()
                .ok_or_else(|| missing("multi-view static forests"))
        };
        let sampler = || self.sampler.as_ref().ok_or_else(|| missing("pose sampler"));
        let bank = || {
            self.bank
                .as_ref()
                .ok_or_else(|| missing("conditional bank"))
        };
        let mv_bank = || {
            self.multiview_bank
                .as_ref()
                .ok_or_else(|| missing("multi-view conditional bank"))
        };
        Ok(match kind {
            ModelKind::Rf => ModelRef::Static(init()?),
            ModelKind::Full => ModelRef::Full {
                init: init()?,
                pair: self
                    .full
                    .as_ref()
                    .map(|t| &t.forest)
                    .ok_or_else(|| missing("full pairwise forest"))?,
            },
            ModelKind::Pcrf => ModelRef::Conditional {
                init: init()?,
                bank: bank()?,
            },
            ModelKind::Mvrf => ModelRef::Mvrf {
                bank: mv()?,
                sampler: sampler()?,
            },
            ModelKind::Mvpcrf => ModelRef::Mvpcrf {
                init: mv()?,
                bank: mv_bank()?,
                sampler: sampler()?,
            },
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let part = |t: &TrainedForest| Part {
            hp: t.hp.clone(),
            ranges: t.ranges,
        };
        let meta = Metadata {
            layout: self.layout,
            labels: self.labels.clone(),
            window: self.window,
            static_forest: self.static_forest.as_ref().map(part),
            full: self.full.as_ref().map(part),
            bank: self.bank.as_ref().map(bank_meta),
            multiview_bank: self.multiview_bank.as_ref().map(bank_meta),
            multiview_static: self.multiview_static.as_ref().map(|b| {
                (
                    Part {
                        hp: b.hp.clone(),
                        ranges: b.ranges,
                    },
                    b.bins.clone(),
                    b.skipped.clone(),
                )
            }),
        };
        let mut out = Vec::new();
        out.extend_from_slice(MODEL_MAGIC);
        codec::put_u16(&mut out, MODEL_VERSION);
        codec::put_bytes(&mut out, &serde_json::to_vec(&meta)?);
        if let Some(t) = &self.static_forest {
            codec::put_u8(&mut out, 1);
            out.extend(t.forest.to_bytes());
        }
        if let Some(t) = &self.full {
            codec::put_u8(&mut out, 2);
            out.extend(t.forest.to_bytes());
        }
        if let Some(b) = &self.bank {
            codec::put_u8(&mut out, 3);
            put_bank(&mut out, b);
        }
        if let Some(b) = &self.multiview_bank {
            codec::put_u8(&mut out, 6);
            put_bank(&mut out, b);
        }
        if let Some(b) = &self.multiview_static {
            codec::put_u8(&mut out, 4);
            codec::put_u32(&mut out, b.cells.len() as u32);
            for (&bin, f) in &b.cells {
                codec::put_u32(&mut out, bin as u32);
                out.extend(f.to_bytes());
            }
        }
        if let Some(s) = &self.sampler {
            codec::put_u8(&mut out, 5);
            s.encode(&mut out);
        }
        codec::put_u8(&mut out, 0);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.expect_magic(MODEL_MAGIC)?;
        let version = r.u16()?;
        if version != MODEL_VERSION {
            return Err(Error::Format(format!(
                "unsupported model version {version}"
            )));
        }
        let meta: Metadata = serde_json::from_slice(r.bytes()?)?;
        let mut bundle = ModelBundle::new(meta.layout, meta.labels, meta.window);
        let trained =
            |part: &Option<Part>, forest: Forest<Feature>, what: &str| -> Result<TrainedForest> {
                let part = part
                    .as_ref()
                    .ok_or_else(|| Error::Format(format!("{what} section without metadata")))?;
                Ok(TrainedForest {
                    forest,
                    hp: part.hp.clone(),
                    ranges: part.ranges,
                    report: GrowthReport::default(),
                })
            };
        loop {
            match r.u8()? {
                0 => break,
                1 => {
                    bundle.static_forest = Some(trained(
                        &meta.static_forest,
                        Forest::read(&mut r)?,
                        "static",
                    )?)
                }
                2 => bundle.full = Some(trained(&meta.full, Forest::read(&mut r)?, "full")?),
                3 => bundle.bank = Some(read_bank(&mut r, meta.bank.clone(), &bundle.labels)?),
                6 => {
                    bundle.multiview_bank = Some(read_bank(
                        &mut r,
                        meta.multiview_bank.clone(),
                        &bundle.labels,
                    )?)
                }
                4 => {
                    let (part, bins, skipped) = meta.multiview_static.clone().ok_or_else(|| {
                        Error::Format("multi-view section without metadata".into())
                    })?;
                    let n = r.count(4)?;
                    let mut cells = BTreeMap::new();
                    for _ in 0..n {
                        let bin = r.u32()? as usize;
                        if bin >= bins.len() {
                            return Err(Error::Format(format!("pose bin {bin} out of range")));
                        }
                        cells.insert(bin, Forest::read(&mut r)?);
                    }
                    bundle.multiview_static = Some(StaticBank {
                        labels: bundle.labels.clone(),
                        bins,
                        hp: part.hp,
                        ranges: part.ranges,
                        cells,
                        skipped,
                    });
                }
                5 => bundle.sampler = Some(PoseSampler::decode(&mut r)?),
                tag => return Err(Error::Format(format!("unknown model section {tag}"))),
            }
        }
        if !r.is_at_end() {
            return Err(Error::Format(format!("trailing bytes at {}", r.position())));
        }
        Ok(bundle)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn bank_meta(b: &ConditionalBank) -> (Part, PoseBinTable, Vec<CellKey>) {
    (
        Part {
            hp: b.hp.clone(),
            ranges: b.ranges,
        },
        b.bins.clone(),
        b.skipped.clone(),
    )
}

fn put_bank(out: &mut Vec<u8>, b: &ConditionalBank) {
    codec::put_u32(out, b.cells.len() as u32);
    for (k, f) in &b.cells {
        codec::put_u32(out, k.source as u32);
        codec::put_u32(out, k.bin as u32);
        out.extend(f.to_bytes());
    }
}

fn read_bank(
    r: &mut Reader<'_>,
    meta: Option<(Part, PoseBinTable, Vec<CellKey>)>,
    labels: &LabelSet,
) -> Result<ConditionalBank> {
    let (part, bins, skipped) =
        meta.ok_or_else(|| Error::Format("bank section without metadata".into()))?;
    let n = r.count(8)?;
    let mut cells = BTreeMap::new();
    for _ in 0..n {
        let key = CellKey {
            source: r.u32()? as usize,
            bin: r.u32()? as usize,
        };
        if key.source >= labels.len() || key.bin >= bins.len() {
            return Err(Error::Format(format!("bank key {key:?} out of range")));
        }
        cells.insert(key, Forest::read(r)?);
    }
    Ok(ConditionalBank {
        labels: labels.clone(),
        bins,
        hp: part.hp,
        ranges: part.ranges,
        cells,
        skipped,
        reports: BTreeMap::new(),
    })
}
