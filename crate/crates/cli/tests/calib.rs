use scene2act::langtext::Vocab;
use scene2act::models::{ApmModel, Coupling, SumModel};
use scene2act::neuralcore::{ModelConfig, OptimizerConfig};
use scene2act::pipeline::{self, generate_dataset, GenerateSpec, Split};
use scene2act::training::*;
use scene2act::worldsim::View;

fn dataset_256(dir: &std::path::Path) -> (Vocab, Vec<SumExample>, Vec<ApmExample>) {
    let spec = GenerateSpec::new(vec![1], 70, vec![View::Auto], 1234);
    generate_dataset(dir, &spec, 4).unwrap();
    let vocab = pipeline::load_vocab(dir).unwrap();
    let mut records = Vec::new();
    for split in Split::ALL {
        records.extend(pipeline::load_split(dir, split).unwrap());
    }
    records.sort_by_key(|r| (r.layout_id, r.seed, r.t));
    records.truncate(256);
    let sums = pipeline::to_sum_examples(&records, &vocab);
    let apms = pipeline::to_apm_examples(&records, &vocab);
    (vocab, sums, apms)
}

#[test]
#[ignore]
fn calibrate_a2() {
    let dir = tempfile::tempdir().unwrap();
    let (vocab, sums, apms) = dataset_256(dir.path());
    eprintln!("records: sum={} apm={}", sums.len(), apms.len());

    for (lr, dropout) in [(1e-3, 0.1), (3e-3, 0.1), (3e-3, 0.0)] {
        let started = std::time::Instant::now();
        let cfg = ModelConfig { dropout_rate: dropout, ..Default::default() };
        let mut sum = SumModel::new(cfg, View::Auto, vocab.clone(), 11).unwrap();
        let tcfg = TrainConfig {
            epochs: 50,
            optimizer: OptimizerConfig { learning_rate: lr, ..Default::default() },
            seed: 5,
            ..Default::default()
        };
        let curve = finetune_sum(&mut sum, &sums, &tcfg).unwrap();
        let tf = teacher_forced_accuracy(&sum, &sums);
        let em = sum_exact_match_rate(&sum, &sums);
        eprintln!(
            "SUM lr={lr} dropout={dropout}: epochs_run={} final_loss={:.4} tf_acc={tf:.4} exact={em:.4} wall={:.1}s",
            curve.len(),
            curve.last().unwrap().loss,
            started.elapsed().as_secs_f64()
        );
    }

    let started = std::time::Instant::now();
    let cfg = ModelConfig { dropout_rate: 0.1, ..Default::default() };
    let sum = SumModel::new(cfg, View::Auto, vocab.clone(), 11).unwrap();
    let mut apm = ApmModel::new(cfg, &vocab, 8, true, Coupling::Text, 12).unwrap();
    let tcfg = TrainConfig {
        epochs: 50,
        optimizer: OptimizerConfig { learning_rate: 3e-3, ..Default::default() },
        caption_source: CaptionSource::Oracle,
        seed: 6,
        ..Default::default()
    };
    let curve = finetune_apm_il(&mut apm, &sum, &apms, &tcfg).unwrap();
    let em = apm_exact_match_rate(&apm, &sum, &apms, CaptionSource::Oracle);
    eprintln!(
        "APM: epochs_run={} final_loss={:.4} exact={em:.4} wall={:.1}s",
        curve.len(),
        curve.last().unwrap().loss,
        started.elapsed().as_secs_f64()
    );
}
