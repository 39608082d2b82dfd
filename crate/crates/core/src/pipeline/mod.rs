//! End-to-end training, inference and evaluation.

mod model_file;
mod report;

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::convnet::{self, NetworkConfig, StageShape, DEFAULT_STAGES};
use crate::error::{Error, Result};
use crate::fusion::{self, FeatureMatrix, SplicedRow};
use crate::imageio::{self, Dataset, ViewKind, ViewSet};
use crate::pca::{self, PcaModel};
use crate::svm::{self, SolverParams, SvmModel};

pub use model_file::{
    load_model, model_from_bytes, model_to_bytes, save_model, FORMAT_VERSION, MAGIC,
};
pub use report::EvalReport;

pub const DEFAULT_RESOLUTION: usize = 32;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_VIEWS: [ViewKind; 4] = [ViewKind::R, ViewKind::G, ViewKind::B, ViewKind::Gray];

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Side length of the square working resolution.
    pub resolution: usize,
    /// Enabled views, kept in canonical splice order.
    pub views: Vec<ViewKind>,
    pub stages: Vec<StageShape>,
    pub seed: u64,
    pub pca_threshold: f64,
    pub svm_c: f64,
    /// Class manifest; filled from `classes.txt` by [`train`].
    pub classes: Vec<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            resolution: DEFAULT_RESOLUTION,
            views: DEFAULT_VIEWS.to_vec(),
            stages: DEFAULT_STAGES.to_vec(),
            seed: DEFAULT_SEED,
            pca_threshold: pca::DEFAULT_THRESHOLD,
            svm_c: svm::DEFAULT_C,
            classes: Vec::new(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.views.is_empty() {
            return Err(Error::Argument("at least one view must be enabled".into()));
        }
        if self.views.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Argument(
                "views must be unique and in r, g, b, gray, depth order".into(),
            ));
        }
        if !(self.pca_threshold > 0.0 && self.pca_threshold <= 1.0) {
            return Err(Error::Argument(format!(
                "pca threshold {} must lie in (0, 1]",
                self.pca_threshold
            )));
        }
        if !(self.svm_c > 0.0 && self.svm_c.is_finite()) {
            return Err(Error::Argument(format!(
                "svm C {} must be positive",
                self.svm_c
            )));
        }
        if self.resolution == 0 {
            return Err(Error::Argument("resolution must be at least 1".into()));
        }
        convnet::trace_shapes(&self.stages, self.resolution, self.resolution)?;
        Ok(())
    }

    pub fn uses_depth(&self) -> bool {
        self.views.contains(&ViewKind::Depth)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub config: PipelineConfig,
    pub net: NetworkConfig,
    pub pca: PcaModel,
    pub svm: SvmModel,
    pub format_version: u32,
}

impl TrainedModel {
    /// Checks the width contracts between the stages.
    pub fn check_consistency(&self) -> Result<()> {
        self.config.validate()?;
        let per_view = self
            .net
            .output_len(self.config.resolution, self.config.resolution)?;
        let n = per_view * self.config.views.len();
        if self.pca.n_features() != n {
            return Err(Error::ConfigMismatch(format!(
                "pca expects {} features but the network and views produce {n}",
                self.pca.n_features()
            )));
        }
        if self.pca.retained == 0 || self.pca.retained > self.pca.eigenpairs.len() {
            return Err(Error::ConfigMismatch(format!(
                "pca retains {} of {} components",
                self.pca.retained,
                self.pca.eigenpairs.len()
            )));
        }
        if self
            .svm
            .weights
            .iter()
            .any(|w| w.len() != self.pca.retained)
        {
            return Err(Error::ConfigMismatch(format!(
                "svm weight width differs from the {} retained components",
                self.pca.retained
            )));
        }
        if self.svm.classes != self.config.classes
            || self.svm.weights.len() != self.svm.classes.len()
            || self.svm.biases.len() != self.svm.classes.len()
        {
            return Err(Error::ConfigMismatch(
                "svm classes do not match the model's class manifest".into(),
            ));
        }
        Ok(())
    }
}

/// Checks that every configured view can be produced for `image`.
fn check_views_available(image: &Path, views: &[ViewKind], has_depth: bool) -> Result<()> {
    if views.contains(&ViewKind::Depth) && !has_depth {
        return Err(Error::Fusion {
            sample: image.display().to_string(),
            view: ViewKind::Depth.name().into(),
            expected: Some(imageio::depth_path_for(image)),
        });
    }
    Ok(())
}

/// Runs the network over each configured view of one sample and splices.
pub fn sample_row(
    views: &ViewSet,
    label: usize,
    sample: &str,
    config: &PipelineConfig,
    net: &NetworkConfig,
) -> Result<SplicedRow> {
    let vectors = config
        .views
        .iter()
        .filter_map(|&k| views.view(k).map(|p| (k, p)))
        .map(|(k, p)| convnet::extract_features(p, k, net))
        .collect::<Result<Vec<_>>>()?;
    fusion::splice(&vectors, &config.views, label, sample)
}

/// Feature matrix of a loaded dataset, rows in dataset order.
pub fn feature_matrix(
    dataset: &Dataset,
    config: &PipelineConfig,
    net: &NetworkConfig,
) -> Result<FeatureMatrix> {
    for s in &dataset.samples {
        check_views_available(&s.source, &config.views, s.views.depth.is_some())?;
    }
    let rows = dataset
        .samples
        .par_iter()
        .map(|s| {
            sample_row(
                &s.views,
                s.label,
                &s.source.display().to_string(),
                config,
                net,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    fusion::assemble(&rows)
}

/// Loads `root` at the configured resolution after checking that every
/// sample can supply the enabled views.
pub fn load_for(root: &Path, classes: &[String], config: &PipelineConfig) -> Result<Dataset> {
    let files = imageio::list_dataset(root, classes)?;
    for (path, _) in &files {
        check_views_available(path, &config.views, imageio::depth_path_for(path).is_file())?;
    }
    imageio::load_dataset(root, classes, config.resolution)
}

/// Builds the network, the feature matrix and the manifest-carrying config
/// for a dataset root.
pub fn extract(
    root: &Path,
    config: &PipelineConfig,
) -> Result<(PipelineConfig, NetworkConfig, FeatureMatrix)> {
    let mut config = config.clone();
    config.validate()?;
    config.classes = imageio::read_manifest(root)?;
    let net = convnet::init_weights(config.seed, &config.stages)?;

    let started = Instant::now();
    let dataset = load_for(root, &config.classes, &config)?;
    log::info!(
        "loaded {} samples from {} in {:.2?}",
        dataset.samples.len(),
        root.display(),
        started.elapsed()
    );

    let started = Instant::now();
    let x = feature_matrix(&dataset, &config, &net)?;
    log::info!(
        "extracted {}x{} feature matrix in {:.2?}",
        x.rows(),
        x.cols(),
        started.elapsed()
    );
    Ok((config, net, x))
}

pub fn train(root: &Path, config: &PipelineConfig) -> Result<TrainedModel> {
    let (config, net, x) = extract(root, config)?;
    train_on_features(config, net, &x)
}

/// Fits PCA and the SVM on an already extracted feature matrix.
pub fn train_on_features(
    config: PipelineConfig,
    net: NetworkConfig,
    x: &FeatureMatrix,
) -> Result<TrainedModel> {
    let started = Instant::now();
    let pca = pca::fit(x, config.pca_threshold)?;
    log::info!(
        "pca: n = {}, w = {} (threshold {}) in {:.2?}",
        x.cols(),
        pca.retained,
        config.pca_threshold,
        started.elapsed()
    );

    let started = Instant::now();
    let reduced = pca.project(x)?;
    let svm = svm::train_multiclass(
        &reduced,
        x.labels(),
        &config.classes,
        config.svm_c,
        &SolverParams::default(),
    )?;
    log::info!(
        "svm: {} one-vs-rest problems in {:.2?}",
        svm.classes.len(),
        started.elapsed()
    );

    let model = TrainedModel {
        config,
        net,
        pca,
        svm,
        format_version: FORMAT_VERSION,
    };
    model.check_consistency()?;
    Ok(model)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class_index: usize,
    pub class_name: String,
    pub decisions: Vec<f64>,
}

/// Decision values for an already loaded view set.
pub fn predict_views(model: &TrainedModel, views: &ViewSet, sample: &str) -> Result<Prediction> {
    let row = sample_row(views, 0, sample, &model.config, &model.net)?;
    let reduced = model.pca.project_row(&row.values)?;
    let decisions = model.svm.decisions(&reduced)?;
    let class_index = svm::argmax(&decisions);
    Ok(Prediction {
        class_index,
        class_name: model.svm.classes[class_index].clone(),
        decisions,
    })
}

pub fn predict_file(
    model: &TrainedModel,
    image: &Path,
    depth: Option<&Path>,
) -> Result<Prediction> {
    if depth.is_some() && !model.config.uses_depth() {
        return Err(Error::ConfigMismatch(
            "a depth map was supplied but the model was trained without the depth view".into(),
        ));
    }
    check_views_available(image, &model.config.views, depth.is_some())?;
    let views = imageio::load_views(image, depth, model.config.resolution)?;
    predict_views(model, &views, &image.display().to_string())
}

pub fn evaluate(model: &TrainedModel, root: &Path) -> Result<EvalReport> {
    let classes = imageio::read_manifest(root)?;
    if classes != model.config.classes {
        return Err(Error::Dataset(format!(
            "{} lists classes [{}] but the model was trained on [{}]",
            root.join("classes.txt").display(),
            classes.join(", "),
            model.config.classes.join(", ")
        )));
    }
    let dataset = load_for(root, &classes, &model.config)?;
    let started = Instant::now();
    let predicted = dataset
        .samples
        .par_iter()
        .map(|s| {
            predict_views(model, &s.views, &s.source.display().to_string()).map(|p| p.class_index)
        })
        .collect::<Result<Vec<_>>>()?;
    log::info!(
        "predicted {} samples in {:.2?}",
        predicted.len(),
        started.elapsed()
    );
    let truth: Vec<usize> = dataset.samples.iter().map(|s| s.label).collect();
    Ok(EvalReport::from_predictions(&classes, &truth, &predicted))
}
