use layerwise_core::config::{preset, DescriptorMode, NetworkConfig, Seeds};
use layerwise_core::container::Container;
use layerwise_core::layer::Rectifier;
use layerwise_core::network::{extract_descriptors, train_network, train_network_with_descriptors, Network};
use layerwise_core::synthetic::stripe_dataset;
use layerwise_core::Error;

fn toy_config() -> NetworkConfig {
    let mut cfg = preset("N1").unwrap();
    cfg.name = "toy".into();
    cfg.augment = Default::default();
    cfg.layer1.k = 8;
    cfg.layer1.stage.patch_side = 4;
    cfg.layer1.stage.pool_side = 4;
    cfg.layer1.stage.pool_stride = 4;
    cfg.layer1.stage.lcn_window = 5;
    cfg.layer1.stage.lcn_sigma = 1.25;
    cfg.layer1.stage.n_patches = 2000;
    cfg.layer1.stage.max_iters = 20;
    cfg.layer2.k_per_group = 6;
    cfg.layer2.stage.n_patches = 500;
    cfg.layer2.stage.max_iters = 20;
    cfg.layer2.stage.pool_side = 2;
    cfg.layer2.stage.pool_stride = 2;
    cfg.seeds = Seeds::new(77);
    cfg
}

#[test]
fn toy_model_round_trips_bitwise() {
    let images = stripe_dataset(1, 10, 24, 0.05);
    let net = train_network(&toy_config(), &images).unwrap();
    assert_eq!(net.layer1.k(), 8);
    assert_eq!(net.groups.len(), 2);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.cdfn");
    net.save(&path).unwrap();
    let back = Network::load(&path).unwrap();
    assert_eq!(back, net);
    assert_eq!(
        Container::load(&path).unwrap().to_bytes(),
        back.to_container().unwrap().to_bytes()
    );
}

#[test]
fn descriptors_are_deterministic_and_sized() {
    let images = stripe_dataset(2, 10, 24, 0.05);
    let cfg = toy_config();
    let (net, train_desc, labels) = train_network_with_descriptors(&cfg, &images).unwrap();
    assert_eq!(labels, images.iter().map(|i| i.label).collect::<Vec<_>>());
    let again = extract_descriptors(&net, &images).unwrap();
    assert_eq!(again, train_desc);
    assert_eq!(again[0].dim(), net.descriptor_dim().unwrap());

    let twin = vec![images[3].clone(), images[3].clone()];
    let d = extract_descriptors(&net, &twin).unwrap();
    assert_eq!(d[0].values, d[1].values);

    let wrong = stripe_dataset(3, 1, 20, 0.05);
    assert!(matches!(extract_descriptors(&net, &wrong), Err(Error::Dim(_))));

    let retrained = train_network(&cfg, &images).unwrap();
    assert_eq!(retrained, net);
}

#[test]
fn concat_mode_and_on_off() {
    let images = stripe_dataset(4, 8, 24, 0.05);
    let mut cfg = toy_config();
    cfg.descriptor_mode = DescriptorMode::ConcatLayers;
    cfg.rectifier = Rectifier::OnOff;
    let net = train_network(&cfg, &images).unwrap();
    assert_eq!(net.groups.total(), 16);
    let d = extract_descriptors(&net, &images[..1]).unwrap();
    assert_eq!(d[0].dim(), cfg.descriptor_dim(24, 24).unwrap());
}

#[test]
fn augmentation_multiplies_training_descriptors() {
    let images = stripe_dataset(5, 6, 24, 0.05);
    let mut cfg = toy_config();
    cfg.augment = layerwise_core::augment::AugmentPlan::mirror_and_rotations();
    let (_, desc, labels) = train_network_with_descriptors(&cfg, &images).unwrap();
    assert_eq!(desc.len(), 24);
    assert_eq!(&labels[6..12], &labels[..6]);
}

#[test]
fn scaled_network_runs_at_reduced_size() {
    let images = stripe_dataset(6, 6, 48, 0.05);
    let mut cfg = toy_config();
    cfg.scale_factor = Some(0.5);
    let net = train_network(&cfg, &images).unwrap();
    assert_eq!(net.input_size, (48, 48));
    let d = extract_descriptors(&net, &images[..2]).unwrap();
    assert_eq!(d[0].dim(), cfg.descriptor_dim(48, 48).unwrap());
}

#[test]
fn indivisible_grouping_is_reported() {
    let mut cfg = toy_config();
    cfg.layer1.k = 10;
    let images = stripe_dataset(7, 4, 24, 0.05);
    assert!(matches!(
        train_network(&cfg, &images),
        Err(Error::InvalidGrouping { k1: 10, n_k: 4 })
    ));
}

#[test]
fn n1_model_has_expected_filter_count() {
    // Full N1 shapes with tiny sample counts: 300 + 75 * 75 filters.
    let mut cfg = preset("N1").unwrap();
    cfg.augment = Default::default();
    cfg.layer1.stage.n_patches = 600;
    cfg.layer1.stage.max_iters = 2;
    cfg.layer2.stage.n_patches = 100;
    cfg.layer2.stage.max_iters = 2;
    let images = stripe_dataset(8, 2, 96, 0.1);
    let net = train_network(&cfg, &images).unwrap();
    assert_eq!(net.layer1.k(), 300);
    assert_eq!(net.layer2.len(), 75);
    assert_eq!(net.filter_count(), 300 + 75 * 75);
    let d = extract_descriptors(&net, &images[..1]).unwrap();
    assert_eq!(d[0].dim(), 75 * 75);
}
