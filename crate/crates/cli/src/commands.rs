use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use gqnq::analysis::{
    embed2d, embedding_csv, fit_gmm, line_svg, match_rate, optimal_assignment, scatter_svg, Regime, RegimeClassifier,
};
use gqnq::data::{Dataset, DatasetKind, MeasurementRecord, DATASET_VERSION};
use gqnq::eval::{evaluate, online_csv, online_dataset, representations, EvalConfig, FidelityReport};
use gqnq::gen::{generate_cv, generate_spin};
use gqnq::training::{train_multi, train_single as fit_single, Checkpoint, TrainMode, CHECKPOINT_VERSION};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::RunConfig;
use crate::error::{require, CliError};
use crate::Selection;

/// Output directory of one invocation, holding the resolved configuration.
pub struct RunDir {
    pub path: PathBuf,
}

impl RunDir {
    pub fn create(path: &Path, command: &str, config: &RunConfig) -> Result<Self, CliError> {
        std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))?;
        let run = Self { path: path.to_path_buf() };
        run.write("config.toml", &config.to_toml()?)?;
        let meta = json!({
            "command": command,
            "gqnq_version": env!("CARGO_PKG_VERSION"),
            "dataset_format_version": DATASET_VERSION,
            "checkpoint_format_version": CHECKPOINT_VERSION,
            "args": std::env::args().skip(1).collect::<Vec<_>>(),
        });
        run.write("run.json", &format!("{:#}\n", meta))?;
        Ok(run)
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<(), CliError> {
        let p = self.file(name);
        std::fs::write(&p, contents).map_err(|e| CliError::io(&p, e))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).map_err(gqnq::Error::from)?;
        self.write(name, &(text + "\n"))
    }
}

fn load_dataset(path: &Path) -> Result<Dataset, CliError> {
    require(path)?;
    Ok(Dataset::load(path)?)
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    require(path)?;
    Ok(Checkpoint::load(path)?)
}

fn select(mut data: Dataset, sel: &Selection) -> Result<Dataset, CliError> {
    if !sel.families.is_empty() {
        data.states.retain(|s| sel.families.contains(&s.meta.family));
    }
    if let Some(n) = sel.limit {
        data.states.truncate(n);
    }
    if data.states.is_empty() {
        return Err(CliError::Usage("no states left after selection".into()));
    }
    Ok(data)
}

fn loss_csv(losses: &[f64]) -> String {
    let mut s = String::from("epoch,loss\n");
    for (e, l) in losses.iter().enumerate() {
        writeln!(s, "{e},{l:.10}").unwrap();
    }
    s
}

fn write_report(run: &RunDir, report: &FidelityReport) -> Result<(), CliError> {
    run.write("report.csv", &report.to_csv())?;
    run.write("report.txt", &report.to_table())?;
    let mut groups = String::from("family,group,states,mean_fidelity,worst_fidelity\n");
    for g in report.groups() {
        let group = if g.group.is_nan() { "all".to_string() } else { g.group.to_string() };
        writeln!(groups, "{},{},{},{:.10},{:.10}", g.family, group, g.states, g.mean, g.worst).unwrap();
    }
    run.write("groups.csv", &groups)?;
    let worst = report.states.iter().map(|s| s.worst).fold(f64::INFINITY, f64::min);
    run.write_json(
        "summary.json",
        &json!({
            "noise": report.noise,
            "context_size": report.context_size,
            "states": report.states.len(),
            "average_fidelity": report.average(),
            "worst_average_fidelity": report.worst_average(),
            "worst_fidelity": worst,
        }),
    )
}

fn progress(epoch: usize, loss: f64) {
    eprintln!("epoch {:>5}  loss {loss:.6}", epoch + 1);
}

pub fn gen_data(run: &RunDir, config: &RunConfig, jsonl: bool) -> Result<(), CliError> {
    let (train, test) = match config.data.kind {
        DatasetKind::Spin => generate_spin(&config.data.spin)?,
        DatasetKind::Cv => generate_cv(&config.data.cv)?,
    };
    for (name, data) in [("train", &train), ("test", &test)] {
        data.save(&run.file(&format!("{name}.gqd")))?;
        if jsonl {
            run.write(&format!("{name}.jsonl"), &data.to_jsonl()?)?;
        }
    }
    println!(
        "{} train and {} test states, {} measurements of {} outcomes, in {}",
        train.states.len(),
        test.states.len(),
        train.header.n_measurements,
        train.header.k,
        run.path.display()
    );
    Ok(())
}

pub fn train(run: &RunDir, config: &RunConfig, data: &Path, resume: Option<&Path>) -> Result<(), CliError> {
    let data = load_dataset(data)?;
    let hyper = config.model.hyper(data.header.m_dim, data.header.k);
    let ckpt = match resume {
        Some(p) => {
            require(p)?;
            let mut c = Checkpoint::load_for_resume(p, &hyper)?;
            let mut expected = c.config.clone();
            expected.epochs = config.train.epochs;
            if c.mode != TrainMode::Multi || expected != config.train {
                return Err(CliError::Usage("training settings differ from the checkpoint being resumed".into()));
            }
            c.config.epochs = config.train.epochs;
            c
        }
        None => Checkpoint::init(hyper, config.train.clone(), TrainMode::Multi)?,
    };
    let ckpt = train_multi(&data.states, ckpt, &mut progress)?;
    ckpt.save(&run.file("checkpoint.ckpt"))?;
    run.write("loss.csv", &loss_csv(&ckpt.loss_history))?;
    if config.analysis.plots {
        run.write("loss.svg", &line_svg(&[("loss", &ckpt.loss_history)], "training loss"))?;
    }
    println!("trained {} epochs; final loss {:.6}", ckpt.epoch, ckpt.loss_history.last().copied().unwrap_or(f64::NAN));
    Ok(())
}

pub fn train_single(run: &RunDir, config: &RunConfig, data: &Path, state: usize) -> Result<(), CliError> {
    let data = load_dataset(data)?;
    let chosen = data
        .states
        .get(state)
        .cloned()
        .ok_or_else(|| CliError::Usage(format!("state {state} out of range ({} states)", data.states.len())))?;
    let hyper = config.model.hyper(data.header.m_dim, data.header.k);
    let ckpt = Checkpoint::init(hyper, config.train.clone(), TrainMode::Single)?;
    let ckpt = fit_single(&chosen.records, ckpt, &mut progress)?;
    ckpt.save(&run.file("checkpoint.ckpt"))?;
    run.write("loss.csv", &loss_csv(&ckpt.loss_history))?;
    // Each copy draws its own random context.
    let repeats = Dataset { header: data.header.clone(), states: vec![chosen; config.eval.repeats] };
    let cfg = EvalConfig { context_size: config.eval.context_size, noise: config.eval.noise()?, seed: config.eval.seed };
    let report = evaluate(&ckpt.model, &repeats, &cfg)?;
    write_report(run, &report)?;
    println!(
        "held-out fidelity over {} contexts: average {:.4}, worst-case average {:.4}",
        report.states.len(),
        report.average(),
        report.worst_average()
    );
    Ok(())
}

#[derive(Deserialize)]
struct QueryLine {
    m: Vec<f64>,
}

fn json_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CliError> {
    let text = crate::error::read_input(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| CliError::Core(e.into())))
        .collect()
}

pub fn predict(run: &RunDir, checkpoint: &Path, context: &Path, queries: &Path) -> Result<(), CliError> {
    let ckpt = load_checkpoint(checkpoint)?;
    let context: Vec<MeasurementRecord> = json_lines(context)?;
    let queries: Vec<QueryLine> = json_lines(queries)?;
    if context.is_empty() || queries.is_empty() {
        return Err(CliError::Usage("context and query files need at least one line each".into()));
    }
    let r = ckpt.model.context_representation(&context)?;
    let ms: Vec<&[f64]> = queries.iter().map(|q| q.m.as_slice()).collect();
    let preds = ckpt.model.predict_queries(&r, &ms)?;
    let mut csv = String::from("query");
    (0..ckpt.model.hyper.k).for_each(|j| write!(csv, ",p{j}").unwrap());
    csv.push('\n');
    for (i, p) in preds.iter().enumerate() {
        write!(csv, "{i}").unwrap();
        p.iter().for_each(|v| write!(csv, ",{v:.12}").unwrap());
        csv.push('\n');
    }
    run.write("predictions.csv", &csv)?;
    print!("{csv}");
    Ok(())
}

pub fn online(
    run: &RunDir,
    config: &RunConfig,
    checkpoint: &Path,
    data: &Path,
    steps: Option<usize>,
    sel: &Selection,
) -> Result<(), CliError> {
    let ckpt = load_checkpoint(checkpoint)?;
    let data = select(load_dataset(data)?, sel)?;
    let steps = steps.unwrap_or(config.eval.online_steps);
    let (traces, curve) = online_dataset(&ckpt.model, &data, steps, config.eval.seed)?;
    let csv = online_csv(&curve);
    run.write("online.csv", &csv)?;
    let mut per_state = String::from("state,family,step,measurement,mean_fidelity,worst_fidelity\n");
    for (i, t) in traces.iter().enumerate() {
        for s in &t.steps {
            writeln!(
                per_state,
                "{i},{},{},{},{:.10},{:.10}",
                data.states[i].meta.family, s.step, s.measurement, s.mean, s.worst
            )
            .unwrap();
        }
    }
    run.write("online_states.csv", &per_state)?;
    if config.analysis.plots {
        let means: Vec<f64> = curve.iter().map(|c| c.0).collect();
        let worst: Vec<f64> = curve.iter().map(|c| c.1).collect();
        run.write("online.svg", &line_svg(&[("mean", &means), ("worst", &worst)], "online fidelity"))?;
    }
    print!("{csv}");
    Ok(())
}

pub fn eval(run: &RunDir, config: &RunConfig, checkpoint: &Path, data: &Path, sel: &Selection) -> Result<(), CliError> {
    let ckpt = load_checkpoint(checkpoint)?;
    let data = select(load_dataset(data)?, sel)?;
    let cfg = EvalConfig { context_size: config.eval.context_size, noise: config.eval.noise()?, seed: config.eval.seed };
    let report = evaluate(&ckpt.model, &data, &cfg)?;
    write_report(run, &report)?;
    print!("{}", report.to_table());
    Ok(())
}

fn representations_csv(reps: &[Vec<f64>], labels: &[String]) -> String {
    let mut s = String::from("label");
    (0..reps.first().map_or(0, Vec::len)).for_each(|j| write!(s, ",r{j}").unwrap());
    s.push('\n');
    for (r, l) in reps.iter().zip(labels) {
        s.push_str(l);
        r.iter().for_each(|v| write!(s, ",{v:.10}").unwrap());
        s.push('\n');
    }
    s
}

pub fn cluster(
    run: &RunDir,
    config: &RunConfig,
    checkpoint: &Path,
    data: &Path,
    k: Option<usize>,
    sel: &Selection,
) -> Result<(), CliError> {
    let ckpt = load_checkpoint(checkpoint)?;
    let data = select(load_dataset(data)?, sel)?;
    let reps = representations(&ckpt.model, &data, config.eval.context_size, config.eval.seed)?;
    let families: Vec<String> =
        data.states.iter().map(|s| s.meta.family.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let labels: Vec<String> = data.states.iter().map(|s| s.meta.family.clone()).collect();
    let truth: Vec<usize> = labels.iter().map(|l| families.binary_search(l).expect("known family")).collect();
    let k = k.or(config.analysis.clusters).unwrap_or(families.len());
    let (gmm, assigned) = fit_gmm(&reps, k, config.analysis.gmm_seed)?;
    let rate = match_rate(&assigned, &truth)?;
    let mapping = optimal_assignment(&assigned, &truth)?;
    let embedding = embed2d(&reps, config.analysis.embed, &config.analysis.tsne)?;
    run.write("representations.csv", &representations_csv(&reps, &labels))?;
    run.write("embedding.csv", &embedding_csv(&embedding, &labels))?;
    if config.analysis.plots {
        run.write("embedding.svg", &scatter_svg(&embedding, &labels, "representations"))?;
    }
    let cluster_family: Vec<Option<&String>> = mapping.iter().map(|m| m.map(|t| &families[t])).collect();
    run.write_json(
        "cluster.json",
        &json!({
            "k": k,
            "families": families,
            "match_rate": rate,
            "cluster_family": cluster_family,
            "log_likelihood": gmm.log_likelihood,
            "assignments": assigned,
        }),
    )?;
    println!("{} states, {k} clusters, match rate {rate:.4}", reps.len());
    Ok(())
}

fn regime_set(model: &gqnq::model::Gqnq, data: &Dataset, config: &RunConfig) -> Result<(Vec<Vec<f64>>, Vec<Regime>), CliError> {
    let reps = representations(model, data, config.eval.context_size, config.eval.seed)?;
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (r, s) in reps.into_iter().zip(&data.states) {
        if let Some(regime) = Regime::from_coupling(s.meta.group) {
            points.push(r);
            labels.push(regime);
        }
    }
    if points.is_empty() {
        return Err(CliError::Usage("no states with a coupling in (0, 1) or above 1".into()));
    }
    Ok((points, labels))
}

pub fn classify(
    run: &RunDir,
    config: &RunConfig,
    checkpoint: &Path,
    train_data: &Path,
    test_data: &Path,
) -> Result<(), CliError> {
    let ckpt = load_checkpoint(checkpoint)?;
    let train = load_dataset(train_data)?;
    let test = load_dataset(test_data)?;
    let (train_x, train_y) = regime_set(&ckpt.model, &train, config)?;
    let (test_x, test_y) = regime_set(&ckpt.model, &test, config)?;
    let clf = RegimeClassifier::train(&train_x, &train_y, &config.analysis.classifier)?;
    let train_acc = clf.accuracy(&train_x, &train_y)?;
    let test_acc = clf.accuracy(&test_x, &test_y)?;
    let mut csv = String::from("index,truth,predicted,logit\n");
    for (i, (x, y)) in test_x.iter().zip(&test_y).enumerate() {
        let logit = clf.logit(x)?;
        writeln!(csv, "{i},{},{},{logit:.10}", y.name(), clf.classify(x)?.name()).unwrap();
    }
    run.write("predictions.csv", &csv)?;
    run.write_json(
        "classify.json",
        &json!({
            "train_states": train_x.len(),
            "test_states": test_x.len(),
            "train_accuracy": train_acc,
            "test_accuracy": test_acc,
        }),
    )?;
    println!("regime classifier: train accuracy {train_acc:.4}, test accuracy {test_acc:.4}");
    Ok(())
}
