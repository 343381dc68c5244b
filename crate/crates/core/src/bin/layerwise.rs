use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use layerwise_core::committee::{accuracy, committee_predict_raw, read_score_file, write_score_file, NormalizeMode, ScoreTable};
use layerwise_core::config::{ExperimentConfig, NetworkConfig};
use layerwise_core::container::Container;
use layerwise_core::network::{extract_descriptors, extract_training_descriptors, train_network, Network};
use layerwise_core::protocol::{evaluate_protocol, fold_images, EvalOptions, CV_FOLDS};
use layerwise_core::stl10::{load_fold_plan, load_labels, load_stl10, LabeledImage};
use layerwise_core::store::{descriptor_network_id, descriptors_from_container, descriptors_to_container, svm_from_container, svm_to_container};
use layerwise_core::svm::{select_reg_c, stack, train_ova_svm_with, SvmParams};
use layerwise_core::Result;

#[derive(Parser)]
#[command(name = "layerwise", version, about = "Layer-wise k-means convolutional networks and score committees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Train,
    Test,
}

#[derive(Subcommand)]
enum Command {
    /// Learn the filter banks of one network on one training fold.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Network name from the experiment file.
        #[arg(long)]
        network: String,
        #[arg(long)]
        fold: usize,
        /// Added to every seed of the network.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Model container to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute descriptors with a trained model.
    Extract {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// `train` yields the augmented descriptors of `--fold`.
        #[arg(long, value_enum)]
        split: Split,
        #[arg(long)]
        fold: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the one-vs-all linear SVM on training descriptors.
    Svm {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        descriptors: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write raw SVM scores for a descriptor file.
    Score {
        #[arg(long)]
        svm: PathBuf,
        #[arg(long)]
        descriptors: PathBuf,
        /// Defaults to the network id stored with the descriptors.
        #[arg(long)]
        network_id: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fuse score files and write `image_id,prediction` lines.
    Committee {
        #[arg(required = true)]
        scores: Vec<PathBuf>,
        /// Test labels (STL-10 label file) for an accuracy line.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Min-max scale each network over all its scores instead of per image.
        #[arg(long)]
        per_network: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full fold protocol: per-fold score files, report.txt and report.csv.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        /// Restrict to these folds (repeatable).
        #[arg(long)]
        fold: Vec<usize>,
        /// Restrict to these networks (repeatable).
        #[arg(long)]
        network: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the default five-network experiment file.
    InitConfig {
        /// Directory holding the STL-10 binaries and fold file.
        #[arg(long, default_value = "data/stl10_binary")]
        data_dir: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::from_toml(&fs::read_to_string(path)?)
}

fn with_seed(mut cfg: NetworkConfig, seed: u64) -> NetworkConfig {
    cfg.seeds = cfg.seeds.offset(seed);
    cfg
}

fn training_fold(cfg: &ExperimentConfig, fold: usize) -> Result<Vec<LabeledImage>> {
    let train = load_stl10(&cfg.data.train_images, &cfg.data.train_labels)?;
    fold_images(&train, &load_fold_plan(&cfg.data.folds)?, fold)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            config,
            network,
            fold,
            seed,
            out,
        } => {
            let cfg = load_config(&config)?;
            let net_cfg = with_seed(cfg.network(&network)?.clone(), seed);
            let images = training_fold(&cfg, fold)?;
            eprintln!("training {network} on fold {fold} ({} images)", images.len());
            let net = train_network(&net_cfg, &images)?;
            net.save(&out)?;
            eprintln!("wrote {} ({} filters)", out.display(), net.filter_count());
        }
        Command::Extract {
            config,
            model,
            split,
            fold,
            out,
        } => {
            let cfg = load_config(&config)?;
            let net = Network::load(&model)?;
            let (descs, labels) = match split {
                Split::Train => {
                    let fold = fold.ok_or_else(|| {
                        layerwise_core::Error::Config("--split train needs --fold".into())
                    })?;
                    extract_training_descriptors(&net, &training_fold(&cfg, fold)?)?
                }
                Split::Test => {
                    let test = load_stl10(&cfg.data.test_images, &cfg.data.test_labels)?;
                    let labels = test.iter().map(|i| i.label).collect();
                    (extract_descriptors(&net, &test)?, labels)
                }
            };
            descriptors_to_container(&descs, &labels, &net.config.name)?.save(&out)?;
            eprintln!("wrote {} descriptors to {}", descs.len(), out.display());
        }
        Command::Svm {
            config,
            descriptors,
            out,
        } => {
            let cfg = load_config(&config)?;
            let (descs, labels) = descriptors_from_container(&Container::load(&descriptors)?)?;
            let x = stack(&descs)?;
            let reg_c = match &cfg.svm.cv_grid {
                Some(grid) => select_reg_c(&x, &labels, grid, CV_FOLDS)?,
                None => cfg.svm.reg_c,
            };
            let (model, stats) = train_ova_svm_with(&x, &labels, &SvmParams::with_c(reg_c))?;
            svm_to_container(&model).save(&out)?;
            eprintln!("C = {reg_c}, epochs per class {:?}, wrote {}", stats.epochs, out.display());
        }
        Command::Score {
            svm,
            descriptors,
            network_id,
            out,
        } => {
            let model = svm_from_container(&Container::load(&svm)?)?;
            let container = Container::load(&descriptors)?;
            let id = network_id
                .or_else(|| descriptor_network_id(&container))
                .unwrap_or_else(|| "network".into());
            let (descs, _) = descriptors_from_container(&container)?;
            let rows = descs.iter().map(|d| model.score(d)).collect::<Result<Vec<_>>>()?;
            let ids = descs.iter().map(|d| d.image_id).collect();
            write_score_file(&out, &ScoreTable::new(id, rows, ids)?)?;
        }
        Command::Committee {
            scores,
            labels,
            per_network,
            out,
        } => {
            let tables = scores.iter().map(read_score_file).collect::<Result<Vec<_>>>()?;
            let mode = if per_network {
                NormalizeMode::PerNetwork
            } else {
                NormalizeMode::PerImage
            };
            let preds = committee_predict_raw(&tables, mode)?;
            let text: String = tables[0]
                .image_ids
                .iter()
                .zip(&preds)
                .map(|(id, p)| format!("{id},{p}\n"))
                .collect();
            fs::write(&out, text)?;
            if let Some(path) = labels {
                let truth = load_labels(path)?;
                for t in &tables {
                    println!("{}: {:.4}", t.network_id, accuracy(&t.predictions(), &truth)?);
                }
                println!("committee: {:.4}", accuracy(&preds, &truth)?);
            }
        }
        Command::Evaluate {
            config,
            fold,
            network,
            seed,
            out,
        } => {
            let cfg = load_config(&config)?;
            let nets: Vec<NetworkConfig> = if network.is_empty() {
                cfg.networks.clone()
            } else {
                network.iter().map(|n| cfg.network(n).cloned()).collect::<Result<_>>()?
            };
            let nets: Vec<NetworkConfig> = nets.into_iter().map(|n| with_seed(n, seed)).collect();
            let train = load_stl10(&cfg.data.train_images, &cfg.data.train_labels)?;
            let test = load_stl10(&cfg.data.test_images, &cfg.data.test_labels)?;
            let folds = load_fold_plan(&cfg.data.folds)?;
            let opts = EvalOptions {
                svm: cfg.svm.clone(),
                normalize: cfg.committee.normalize.into(),
                out_dir: Some(out),
                only_folds: (!fold.is_empty()).then_some(fold),
            };
            let report = evaluate_protocol(&nets, &train, &test, &folds, &opts)?;
            print!("{}", report.to_text());
        }
        Command::InitConfig { data_dir, out } => {
            fs::write(&out, ExperimentConfig::stl10_committee(&data_dir)?.to_toml()?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
