//! Container layouts for SVM models and descriptor sets.

use ndarray::{Array1, ArrayD, IxDyn};

use crate::container::Container;
use crate::error::{Error, Result};
use crate::svm::{stack, Descriptor, SvmModel};

pub fn svm_to_container(model: &SvmModel) -> Container {
    let mut c = Container::new(format!("kind = \"svm\"\nclasses = {}\n", model.n_classes()));
    c.push("svm/weights", model.weights.clone().into_dyn());
    c.push("svm/biases", model.biases.clone().into_dyn());
    c.push_scalar("svm/reg_c", model.reg_c);
    c.push("svm/feature_mean", model.feature_mean.clone().into_dyn());
    c.push("svm/feature_std", model.feature_std.clone().into_dyn());
    c
}

pub fn svm_from_container(c: &Container) -> Result<SvmModel> {
    let model = SvmModel {
        weights: c.get2("svm/weights")?,
        biases: c.get1("svm/biases")?,
        reg_c: c.scalar("svm/reg_c")?,
        feature_mean: c.get1("svm/feature_mean")?,
        feature_std: c.get1("svm/feature_std")?,
    };
    let (classes, dim) = model.weights.dim();
    if model.biases.len() != classes || model.feature_mean.len() != dim || model.feature_std.len() != dim {
        return Err(Error::Format("inconsistent SVM tensor shapes".into()));
    }
    Ok(model)
}

/// Descriptors with their labels. Unlabeled sets store an empty label
/// tensor.
pub fn descriptors_to_container(descs: &[Descriptor], labels: &[usize], network_id: &str) -> Result<Container> {
    if !labels.is_empty() && labels.len() != descs.len() {
        return Err(Error::Dim("label count does not match descriptors".into()));
    }
    let mut c = Container::new(format!("kind = \"descriptors\"\nnetwork = \"{network_id}\"\n"));
    c.push("descriptors", stack(descs)?.into_dyn());
    c.push(
        "image_ids",
        ArrayD::from_shape_vec(IxDyn(&[descs.len()]), descs.iter().map(|d| d.image_id as f64).collect())
            .expect("shape"),
    );
    c.push(
        "labels",
        ArrayD::from_shape_vec(IxDyn(&[labels.len()]), labels.iter().map(|&l| l as f64).collect())
            .expect("shape"),
    );
    Ok(c)
}

pub fn descriptors_from_container(c: &Container) -> Result<(Vec<Descriptor>, Vec<usize>)> {
    let x = c.get2("descriptors")?;
    let ids: Array1<f64> = c.get1("image_ids")?;
    let labels: Vec<usize> = c.get1("labels")?.iter().map(|&l| l as usize).collect();
    if ids.len() != x.nrows() {
        return Err(Error::Format("image id count does not match descriptors".into()));
    }
    let descs = x
        .rows()
        .into_iter()
        .zip(ids.iter())
        .map(|(r, &id)| Descriptor::new(r.to_owned(), id as u64))
        .collect();
    Ok((descs, labels))
}

/// Reads the `network = "..."` line of a descriptor container.
pub fn descriptor_network_id(c: &Container) -> Option<String> {
    c.config
        .lines()
        .find_map(|l| l.strip_prefix("network = \""))
        .map(|rest| rest.trim_end_matches('"').to_string())
}
