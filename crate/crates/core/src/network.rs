//! A trained two-layer feature extractor: filter learning, descriptor
//! extraction and persistence.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayD, IxDyn};
use rayon::prelude::*;

use crate::augment::{expand_set, scale, AugmentPlan};
use crate::config::{DescriptorMode, NetworkConfig, StageParams};
use crate::container::Container;
use crate::error::{Error, Result};
use crate::kmeans::{kmeans, FilterBank};
use crate::layer::{make_groups, run_layer, GroupAssignment, LayerConfig};
use crate::patch::{apply_zca, extract_patches, fit_zca, ZcaTransform};
use crate::rng::{SeededRng, ALGORITHM_ID};
use crate::stl10::LabeledImage;
use crate::svm::Descriptor;
use crate::tensor::FeatureMapSet;

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub config: NetworkConfig,
    /// Size of the images the network was trained on, before rescaling.
    pub input_size: (usize, usize),
    pub layer1: FilterBank,
    pub groups: GroupAssignment,
    pub layer2: Vec<FilterBank>,
}

/// Samples patches, normalizes and whitens them, and clusters them into a
/// filter bank.
pub fn learn_filter_bank(
    sets: &[FeatureMapSet],
    stage: &StageParams,
    k: usize,
    patch_rng: &mut SeededRng,
    kmeans_rng: &mut SeededRng,
    layer_index: usize,
) -> Result<FilterBank> {
    let mut patches = extract_patches(sets, stage.patch_side, stage.n_patches, patch_rng)?;
    patches.normalize_columns();
    let zca = fit_zca(&patches, stage.zca_epsilon)?;
    let white = apply_zca(&zca, &patches)?;
    let result = kmeans(&white, k, stage.max_iters, kmeans_rng)?;
    FilterBank::new(result.centroids, stage.patch_side, patches.depth(), zca, layer_index)
}

/// Rescales images when the network runs at reduced resolution.
pub fn prepare_images(cfg: &NetworkConfig, images: &[LabeledImage]) -> Result<Vec<LabeledImage>> {
    match cfg.scale_factor {
        Some(f) if f != 1.0 => images.par_iter().map(|img| scale(img, f)).collect(),
        _ => Ok(images.to_vec()),
    }
}

fn check_uniform_size(images: &[LabeledImage]) -> Result<(usize, usize)> {
    let first = images
        .first()
        .ok_or_else(|| Error::Dim("no training images".into()))?;
    let size = first.pixels.dim();
    if images.iter().any(|i| i.pixels.dim() != size) {
        return Err(Error::Dim("training images differ in size".into()));
    }
    Ok(size)
}

/// Trains on `images` (augmented per the config's plan) and also returns the
/// descriptors and labels of the augmented training set.
pub fn train_network_with_descriptors(
    cfg: &NetworkConfig,
    images: &[LabeledImage],
) -> Result<(Network, Vec<Descriptor>, Vec<usize>)> {
    cfg.validate()?;
    let input_size = check_uniform_size(images)?;
    cfg.layer_shapes(input_size.0, input_size.1)?;

    let plan = AugmentPlan {
        scale_factor: None,
        ..cfg.augment.clone()
    };
    let training = expand_set(&prepare_images(cfg, images)?, &plan)?;
    let labels: Vec<usize> = training.iter().map(|i| i.label).collect();
    let inputs: Vec<FeatureMapSet> = training
        .iter()
        .enumerate()
        .map(|(i, img)| FeatureMapSet::from_image(&img.pixels, i as u64))
        .collect::<Result<_>>()?;

    let layer1 = learn_filter_bank(
        &inputs,
        &cfg.layer1.stage,
        cfg.layer1.k,
        &mut SeededRng::with_stream(cfg.seeds.patches, 0),
        &mut SeededRng::new(cfg.seeds.kmeans1),
        1,
    )?;
    let l1_cfg = cfg.layer1_config();
    let l1_out: Vec<FeatureMapSet> = inputs
        .par_iter()
        .map(|x| run_layer(x, &layer1, &l1_cfg))
        .collect::<Result<_>>()?;
    drop(inputs);

    let groups = make_groups(
        l1_out[0].depth(),
        cfg.layer2.group_size,
        &mut SeededRng::new(cfg.seeds.grouping),
    )?;
    let layer2: Vec<FilterBank> = groups
        .groups()
        .par_iter()
        .enumerate()
        .map(|(g, members)| {
            let sliced: Vec<FeatureMapSet> = l1_out
                .iter()
                .map(|s| s.slice_depths(members))
                .collect::<Result<_>>()?;
            learn_filter_bank(
                &sliced,
                &cfg.layer2.stage,
                cfg.layer2.k_per_group,
                &mut SeededRng::with_stream(cfg.seeds.patches, 1 + g as u64),
                &mut SeededRng::with_stream(cfg.seeds.kmeans2, g as u64),
                2,
            )
        })
        .collect::<Result<_>>()?;

    let network = Network {
        config: cfg.clone(),
        input_size,
        layer1,
        groups,
        layer2,
    };
    let descriptors = l1_out
        .par_iter()
        .map(|l1| network.descriptor_from_layer1(l1))
        .collect::<Result<_>>()?;
    Ok((network, descriptors, labels))
}

pub fn train_network(cfg: &NetworkConfig, images: &[LabeledImage]) -> Result<Network> {
    Ok(train_network_with_descriptors(cfg, images)?.0)
}

impl Network {
    fn layer1_config(&self) -> LayerConfig {
        self.config.layer1_config()
    }

    /// Layer-1 output for an image already at working resolution.
    pub fn run_layer1(&self, input: &FeatureMapSet) -> Result<FeatureMapSet> {
        run_layer(input, &self.layer1, &self.layer1_config())
    }

    /// Per-group layer-2 outputs stacked along depth.
    pub fn run_layer2(&self, l1: &FeatureMapSet) -> Result<FeatureMapSet> {
        let cfg = self.config.layer2_config();
        let parts = self
            .groups
            .groups()
            .iter()
            .zip(&self.layer2)
            .map(|(members, bank)| run_layer(&l1.slice_depths(members)?, bank, &cfg))
            .collect::<Result<Vec<_>>>()?;
        FeatureMapSet::concat(&parts)
    }

    fn descriptor_from_layer1(&self, l1: &FeatureMapSet) -> Result<Descriptor> {
        let top = self.run_layer2(l1)?;
        let values = match self.config.descriptor_mode {
            DescriptorMode::Layer2Only => top.flatten(),
            DescriptorMode::ConcatLayers => {
                let mut v = l1.flatten();
                v.extend(top.flatten());
                v
            }
        };
        Ok(Descriptor::new(Array1::from(values), l1.source_image_id()))
    }

    /// Descriptor for one image at its original resolution.
    pub fn descriptor(&self, img: &LabeledImage, image_id: u64) -> Result<Descriptor> {
        if img.pixels.dim() != self.input_size {
            return Err(Error::Dim(format!(
                "image is {:?}, network expects {:?}",
                img.pixels.dim(),
                self.input_size
            )));
        }
        let img = match self.config.scale_factor {
            Some(f) if f != 1.0 => scale(img, f)?,
            _ => img.clone(),
        };
        let l1 = self.run_layer1(&FeatureMapSet::from_image(&img.pixels, image_id)?)?;
        self.descriptor_from_layer1(&l1)
    }

    pub fn descriptor_dim(&self) -> Result<usize> {
        self.config.descriptor_dim(self.input_size.0, self.input_size.1)
    }

    pub fn filter_count(&self) -> usize {
        self.layer1.k() + self.layer2.iter().map(FilterBank::k).sum::<usize>()
    }

    pub fn to_container(&self) -> Result<Container> {
        let mut c = Container::new(format!("# rng = {ALGORITHM_ID}\n{}", self.config.to_toml()?));
        c.push(
            "meta/input_size",
            ArrayD::from_shape_vec(IxDyn(&[2]), vec![self.input_size.0 as f64, self.input_size.1 as f64])
                .expect("shape"),
        );
        push_bank(&mut c, "layer1", &self.layer1);
        let n_k = self.groups.group_size();
        let grouping = Array2::from_shape_fn((self.groups.len(), n_k), |(g, i)| self.groups.groups()[g][i] as f64);
        c.push("grouping", grouping.into_dyn());
        for (g, bank) in self.layer2.iter().enumerate() {
            push_bank(&mut c, &format!("layer2/{g}"), bank);
        }
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let config = NetworkConfig::from_toml(&c.config)?;
        config.validate()?;
        let size = c.get1("meta/input_size")?;
        if size.len() != 2 {
            return Err(Error::Format("meta/input_size must hold two values".into()));
        }
        let layer1 = read_bank(c, "layer1", config.layer1.stage.patch_side, 1, 1)?;
        let grouping = c.get2("grouping")?;
        let groups: Vec<Vec<usize>> = grouping
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|&v| v as usize).collect())
            .collect();
        let groups = GroupAssignment::new(groups, layer1.k() * config.rectifier.fan_out())?;
        let layer2 = (0..groups.len())
            .map(|g| read_bank(c, &format!("layer2/{g}"), config.layer2.stage.patch_side, groups.group_size(), 2))
            .collect::<Result<_>>()?;
        Ok(Self {
            config,
            input_size: (size[0] as usize, size[1] as usize),
            layer1,
            groups,
            layer2,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container()?.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }
}

/// Descriptors for `images` at their original resolution; image ids are
/// positions in the slice.
pub fn extract_descriptors(network: &Network, images: &[LabeledImage]) -> Result<Vec<Descriptor>> {
    images
        .par_iter()
        .enumerate()
        .map(|(i, img)| network.descriptor(img, i as u64))
        .collect()
}

/// Descriptors and labels for the augmented training set, in the same order
/// and with the same preprocessing as used during training.
pub fn extract_training_descriptors(
    network: &Network,
    images: &[LabeledImage],
) -> Result<(Vec<Descriptor>, Vec<usize>)> {
    if let Some(bad) = images.iter().find(|i| i.pixels.dim() != network.input_size) {
        return Err(Error::Dim(format!(
            "image is {:?}, network expects {:?}",
            bad.pixels.dim(),
            network.input_size
        )));
    }
    let plan = AugmentPlan {
        scale_factor: None,
        ..network.config.augment.clone()
    };
    let training = expand_set(&prepare_images(&network.config, images)?, &plan)?;
    let labels = training.iter().map(|i| i.label).collect();
    let descriptors = training
        .par_iter()
        .enumerate()
        .map(|(i, img)| {
            let l1 = network.run_layer1(&FeatureMapSet::from_image(&img.pixels, i as u64)?)?;
            network.descriptor_from_layer1(&l1)
        })
        .collect::<Result<_>>()?;
    Ok((descriptors, labels))
}

fn push_bank(c: &mut Container, prefix: &str, bank: &FilterBank) {
    c.push(format!("{prefix}/filters"), bank.filters.clone().into_dyn());
    c.push(format!("{prefix}/zca_mean"), bank.whitening.mean.clone().into_dyn());
    c.push(format!("{prefix}/zca_matrix"), bank.whitening.matrix.clone().into_dyn());
    c.push_scalar(format!("{prefix}/zca_epsilon"), bank.whitening.epsilon);
}

fn read_bank(c: &Container, prefix: &str, patch_side: usize, depth: usize, layer: usize) -> Result<FilterBank> {
    let whitening = ZcaTransform {
        mean: c.get1(&format!("{prefix}/zca_mean"))?,
        matrix: c.get2(&format!("{prefix}/zca_matrix"))?,
        epsilon: c.scalar(&format!("{prefix}/zca_epsilon"))?,
    };
    FilterBank::new(c.get2(&format!("{prefix}/filters"))?, patch_side, depth, whitening, layer)
        .map_err(|e| Error::Format(format!("{prefix}: {e}")))
}
