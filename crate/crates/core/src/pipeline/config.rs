use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kv::KeyValues;
use crate::loss::DiceConfig;
use crate::metrics::HausdorffMode;
use crate::model::{Architecture, ZNetConfig};
use crate::preprocess::{
    clinical_geometries, AugmentSpec, ClaheConfig, PhantomGeometry, PhantomShape, UniformMethod,
};
use crate::train::TrainConfig;

/// Which cases `predict` runs on.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum CaseSelection {
    /// The ids listed under `validation`.
    #[default]
    Validation,
    All,
    Ids(Vec<String>),
}

impl fmt::Display for CaseSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CaseSelection::Validation => f.write_str("validation"),
            CaseSelection::All => f.write_str("all"),
            CaseSelection::Ids(ids) => f.write_str(&ids.join(",")),
        }
    }
}

impl FromStr for CaseSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "validation" => Ok(CaseSelection::Validation),
            "all" => Ok(CaseSelection::All),
            "" => Err(Error::config("predict_cases is empty")),
            list => Ok(CaseSelection::Ids(split_list(list))),
        }
    }
}

fn split_list(s: &str) -> Vec<String> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// The volumes `phantom` generates.
#[derive(Clone, Debug, PartialEq)]
pub enum PhantomSet {
    /// The five clinical geometries with ids 05, 15, 25, 35, 45.
    Clinical,
    /// `count` volumes of one geometry with ids 00, 01, ...
    Custom {
        count: usize,
        dims: [usize; 3],
        spacing: [f64; 3],
    },
}

impl PhantomSet {
    pub fn geometries(&self) -> Vec<PhantomGeometry> {
        match self {
            PhantomSet::Clinical => clinical_geometries(),
            PhantomSet::Custom {
                count,
                dims,
                spacing,
            } => (0..*count)
                .map(|i| PhantomGeometry {
                    id: format!("{i:02}"),
                    dims: *dims,
                    spacing: *spacing,
                })
                .collect(),
        }
    }
}

/// Every setting a command reads.
///
/// Built from a `key = value` file plus overrides; [`RunConfig::to_kv`]
/// renders the fully resolved form, which each command saves as `run.cfg`
/// next to its outputs. A saved `run.cfg` loads back to the same config.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    /// Masks to score (`evaluate`).
    pub pred_dir: Option<PathBuf>,
    /// Reference masks (`evaluate`); defaults to `data_dir`.
    pub gt_dir: Option<PathBuf>,
    /// Weights to predict with.
    pub checkpoint: Option<PathBuf>,
    /// Checkpoint to continue training from.
    pub resume: Option<PathBuf>,
    /// Drives weight init, augmentation, shuffling and phantoms.
    pub seed: u64,
    /// Worker threads; 0 lets the runtime decide.
    pub threads: usize,
    pub method: UniformMethod,
    /// Methods compared by `simulate`.
    pub methods: Vec<UniformMethod>,
    pub architecture: Architecture,
    pub model: ZNetConfig,
    pub train: TrainConfig,
    /// Write a numbered checkpoint every this many epochs; 0 disables.
    pub checkpoint_every: u64,
    pub augment: AugmentSpec,
    /// Augmented copies added per training slice.
    pub augment_copies: usize,
    pub clahe: ClaheConfig,
    pub validation: Vec<String>,
    pub predict_cases: CaseSelection,
    pub overlay: bool,
    pub hd_mode: HausdorffMode,
    pub phantoms: PhantomSet,
    pub phantom_shape: PhantomShape,
    pub phantom_noise: f32,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("out"),
            pred_dir: None,
            gt_dir: None,
            checkpoint: None,
            resume: None,
            seed: 0,
            threads: 0,
            method: UniformMethod::default(),
            methods: UniformMethod::ALL.to_vec(),
            architecture: Architecture::ZNet,
            model: ZNetConfig::default(),
            train: TrainConfig::default(),
            checkpoint_every: 1,
            augment: AugmentSpec::default(),
            augment_copies: 1,
            clahe: ClaheConfig::default(),
            validation: ["05", "15", "25", "35", "45"].map(String::from).to_vec(),
            predict_cases: CaseSelection::Validation,
            overlay: false,
            hd_mode: HausdorffMode::Max,
            phantoms: PhantomSet::Clinical,
            phantom_shape: PhantomShape::default(),
            phantom_noise: 20.0,
        }
    }
}

/// Every key a config file may contain.
pub const KEYS: &[&str] = &[
    "data_dir",
    "out_dir",
    "pred_dir",
    "gt_dir",
    "checkpoint",
    "resume",
    "seed",
    "threads",
    "method",
    "methods",
    "architecture",
    "depth",
    "base_channels",
    "input_size",
    "skip_align",
    "precision",
    "batch_size",
    "epochs",
    "lr",
    "dice_smooth",
    "shuffle",
    "max_steps",
    "checkpoint_every",
    "augment_copies",
    "rotation_deg",
    "flip",
    "zoom",
    "clahe_clip",
    "clahe_tiles",
    "validation",
    "predict_cases",
    "overlay",
    "hd_mode",
    "phantom_set",
    "phantom_count",
    "phantom_dims",
    "phantom_spacing",
    "phantom_shape",
    "phantom_radius",
    "phantom_semi_axes",
    "phantom_noise",
];

fn fixed<T: FromStr + Copy + Default, const N: usize>(
    kv: &KeyValues,
    key: &str,
) -> Result<Option<[T; N]>> {
    match kv.parse_list::<T>(key)? {
        None => Ok(None),
        Some(v) if v.len() == N => {
            let mut out = [T::default(); N];
            out.copy_from_slice(&v);
            Ok(Some(out))
        }
        Some(v) => Err(Error::config(format!(
            "`{key}` needs {N} values, got {}",
            v.len()
        ))),
    }
}

fn join<T: fmt::Display>(v: &[T], sep: &str) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(sep)
}

impl RunConfig {
    /// Reads `path` (if any), applies `overrides`, and resolves.
    pub fn load(path: Option<&Path>, overrides: &KeyValues) -> Result<Self> {
        let mut kv = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                KeyValues::parse(&text, p)?
            }
            None => KeyValues::new(),
        };
        kv.merge(overrides);
        Self::from_kv(&kv)
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        if let Some((k, _)) = kv.iter().find(|(k, _)| !KEYS.contains(k)) {
            return Err(Error::config(format!("unknown config key `{k}`")));
        }
        let mut c = RunConfig::default();
        let path = |key: &str| kv.get(key).map(PathBuf::from);
        if let Some(p) = path("data_dir") {
            c.data_dir = p;
        }
        if let Some(p) = path("out_dir") {
            c.out_dir = p;
        }
        c.pred_dir = path("pred_dir");
        c.gt_dir = path("gt_dir");
        c.checkpoint = path("checkpoint");
        c.resume = path("resume");
        c.seed = kv.parse_value("seed")?.unwrap_or(c.seed);
        c.threads = kv.parse_value("threads")?.unwrap_or(c.threads);
        if let Some(v) = kv.get("method") {
            c.method = v.parse()?;
        }
        if let Some(v) = kv.get("methods") {
            c.methods = split_list(v)
                .iter()
                .map(|m| m.parse())
                .collect::<Result<_>>()?;
        }
        if let Some(v) = kv.get("architecture") {
            c.architecture = v.parse()?;
        }

        let m = &mut c.model;
        m.depth = kv.parse_value("depth")?.unwrap_or(m.depth);
        m.base_channels = kv.parse_value("base_channels")?.unwrap_or(m.base_channels);
        if let Some([h, w]) = fixed::<usize, 2>(kv, "input_size")? {
            m.input_size = (h, w);
        }
        if let Some(v) = kv.get("skip_align") {
            m.skip_align = v.parse()?;
        }
        if let Some(v) = kv.get("precision") {
            m.precision = v.parse()?;
        }

        let t = &mut c.train;
        t.seed = c.seed;
        t.batch_size = kv.parse_value("batch_size")?.unwrap_or(t.batch_size);
        t.epochs = kv.parse_value("epochs")?.unwrap_or(t.epochs);
        t.lr = kv.parse_value("lr")?.unwrap_or(t.lr);
        t.dice = DiceConfig {
            s: kv.parse_value("dice_smooth")?.unwrap_or(t.dice.s),
        };
        t.shuffle = kv.parse_value("shuffle")?.unwrap_or(t.shuffle);
        t.max_steps = match kv.get("max_steps") {
            None | Some("none") => None,
            Some(_) => kv.parse_value("max_steps")?,
        };
        c.checkpoint_every = kv
            .parse_value("checkpoint_every")?
            .unwrap_or(c.checkpoint_every);

        let a = &mut c.augment;
        a.seed = c.seed;
        a.rotation_deg = kv.parse_value("rotation_deg")?.unwrap_or(a.rotation_deg);
        a.flip = kv.parse_value("flip")?.unwrap_or(a.flip);
        if let Some([lo, hi]) = fixed::<f64, 2>(kv, "zoom")? {
            a.zoom = (lo, hi);
        }
        c.augment_copies = kv
            .parse_value("augment_copies")?
            .unwrap_or(c.augment_copies);

        c.clahe.clip_limit = kv.parse_value("clahe_clip")?.unwrap_or(c.clahe.clip_limit);
        if let Some([r, q]) = fixed::<usize, 2>(kv, "clahe_tiles")? {
            c.clahe.tiles = (r, q);
        }

        if let Some(v) = kv.get("validation") {
            c.validation = split_list(v);
        }
        if let Some(v) = kv.get("predict_cases") {
            c.predict_cases = v.parse()?;
        }
        c.overlay = kv.parse_value("overlay")?.unwrap_or(c.overlay);
        if let Some(v) = kv.get("hd_mode") {
            c.hd_mode = v.parse()?;
        }

        c.phantoms = match kv.get("phantom_set").unwrap_or("clinical") {
            "clinical" => PhantomSet::Clinical,
            "custom" => PhantomSet::Custom {
                count: kv.parse_value("phantom_count")?.unwrap_or(4),
                dims: fixed(kv, "phantom_dims")?.unwrap_or([8, 64, 64]),
                spacing: fixed(kv, "phantom_spacing")?.unwrap_or([3.0, 0.75, 0.75]),
            },
            other => {
                return Err(Error::config(format!(
                    "phantom_set must be clinical or custom, got {other:?}"
                )))
            }
        };
        c.phantom_shape = match kv.get("phantom_shape").unwrap_or("ellipsoid") {
            "ellipsoid" => match fixed::<f64, 3>(kv, "phantom_semi_axes")? {
                Some(semi_axes_mm) => PhantomShape::Ellipsoid { semi_axes_mm },
                None => PhantomShape::default(),
            },
            "sphere" => PhantomShape::Sphere {
                radius: kv.parse_value("phantom_radius")?.unwrap_or(8.0),
            },
            other => {
                return Err(Error::config(format!(
                    "phantom_shape must be ellipsoid or sphere, got {other:?}"
                )))
            }
        };
        c.phantom_noise = kv.parse_value("phantom_noise")?.unwrap_or(c.phantom_noise);
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.augment.validate()?;
        if !(self.clahe.clip_limit > 0.0) {
            return Err(Error::config(format!(
                "clahe_clip must be positive, got {}",
                self.clahe.clip_limit
            )));
        }
        if self.clahe.tiles.0 == 0 || self.clahe.tiles.1 == 0 {
            return Err(Error::config("clahe_tiles must be positive"));
        }
        if self.methods.is_empty() {
            return Err(Error::config("methods is empty"));
        }
        if self.model.in_channels != 1 {
            return Err(Error::config("volumes are single-channel"));
        }
        Ok(())
    }

    /// Target slice size of the uniform-size step: the network input size.
    pub fn target(&self) -> (usize, usize) {
        self.model.input_size
    }

    /// The fully resolved configuration, one line per key.
    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        let mut set = |k: &str, v: String| kv.set(k, v);
        set("data_dir", self.data_dir.display().to_string());
        set("out_dir", self.out_dir.display().to_string());
        for (k, p) in [
            ("pred_dir", &self.pred_dir),
            ("gt_dir", &self.gt_dir),
            ("checkpoint", &self.checkpoint),
            ("resume", &self.resume),
        ] {
            if let Some(p) = p {
                set(k, p.display().to_string());
            }
        }
        set("seed", self.seed.to_string());
        set("threads", self.threads.to_string());
        set("method", self.method.to_string());
        set("methods", join(&self.methods, ","));
        set("architecture", self.architecture.to_string());
        set("depth", self.model.depth.to_string());
        set("base_channels", self.model.base_channels.to_string());
        set(
            "input_size",
            format!("{} {}", self.model.input_size.0, self.model.input_size.1),
        );
        set("skip_align", self.model.skip_align.to_string());
        set("precision", self.model.precision.to_string());
        set("batch_size", self.train.batch_size.to_string());
        set("epochs", self.train.epochs.to_string());
        set("lr", self.train.lr.to_string());
        set("dice_smooth", self.train.dice.s.to_string());
        set("shuffle", self.train.shuffle.to_string());
        set(
            "max_steps",
            self.train
                .max_steps
                .map_or("none".into(), |m| m.to_string()),
        );
        set("checkpoint_every", self.checkpoint_every.to_string());
        set("augment_copies", self.augment_copies.to_string());
        set("rotation_deg", self.augment.rotation_deg.to_string());
        set("flip", self.augment.flip.to_string());
        set(
            "zoom",
            format!("{} {}", self.augment.zoom.0, self.augment.zoom.1),
        );
        set("clahe_clip", self.clahe.clip_limit.to_string());
        set(
            "clahe_tiles",
            format!("{} {}", self.clahe.tiles.0, self.clahe.tiles.1),
        );
        set("validation", self.validation.join(","));
        set("predict_cases", self.predict_cases.to_string());
        set("overlay", self.overlay.to_string());
        set("hd_mode", self.hd_mode.to_string());
        match &self.phantoms {
            PhantomSet::Clinical => set("phantom_set", "clinical".into()),
            PhantomSet::Custom {
                count,
                dims,
                spacing,
            } => {
                set("phantom_set", "custom".into());
                set("phantom_count", count.to_string());
                set("phantom_dims", join(dims, " "));
                set("phantom_spacing", join(spacing, " "));
            }
        }
        match self.phantom_shape {
            PhantomShape::Ellipsoid { semi_axes_mm } => {
                set("phantom_shape", "ellipsoid".into());
                set("phantom_semi_axes", join(&semi_axes_mm, " "));
            }
            PhantomShape::Sphere { radius } => {
                set("phantom_shape", "sphere".into());
                set("phantom_radius", radius.to_string());
            }
        }
        set("phantom_noise", self.phantom_noise.to_string());
        kv
    }

    /// Writes `run.cfg` into the output directory.
    pub fn persist(&self, command: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out_dir).map_err(|e| Error::io(&self.out_dir, e))?;
        let path = self.out_dir.join("run.cfg");
        let text = format!(
            "# resolved configuration of `znet {command}`\n{}",
            self.to_kv().render()
        );
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve_and_round_trip() {
        let c = RunConfig::from_kv(&KeyValues::new()).unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(RunConfig::from_kv(&c.to_kv()).unwrap(), c);
    }

    #[test]
    fn custom_values_round_trip() {
        let text = "seed = 9\ndepth = 2\nbase_channels = 4\ninput_size = 32 32\nprecision = f64\n\
                    max_steps = 50\nclahe_clip = inf\nvalidation =\nphantom_set = custom\n\
                    phantom_shape = sphere\nphantom_radius = 0\npredict_cases = 01,03\nmethods = resize3d\n";
        let c = RunConfig::from_kv(&KeyValues::parse(text, Path::new("t")).unwrap()).unwrap();
        assert_eq!(c.train.seed, 9);
        assert_eq!(c.augment.seed, 9);
        assert_eq!(c.train.max_steps, Some(50));
        assert!(c.validation.is_empty());
        assert_eq!(c.clahe.clip_limit, f64::INFINITY);
        assert_eq!(
            c.predict_cases,
            CaseSelection::Ids(vec!["01".into(), "03".into()])
        );
        assert_eq!(RunConfig::from_kv(&c.to_kv()).unwrap(), c);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        let bad = |t: &str| {
            RunConfig::from_kv(&KeyValues::parse(t, Path::new("t")).unwrap()).unwrap_err()
        };
        assert!(bad("epoch = 3").to_string().contains("epoch"));
        assert!(bad("input_size = 32").to_string().contains("2 values"));
        assert!(bad("method = crop").to_string().contains("crop"));
        assert!(bad("batch_size = 0").is_user_error());
        assert!(bad("input_size = 30 30\ndepth = 2").is_user_error());
    }
}
