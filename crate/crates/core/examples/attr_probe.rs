use mmscreen::analysis::contribution;
use mmscreen::dataset::{generate_synthetic, GeneratorConfig, ModalityId, TaskId};
use mmscreen::pipeline::{cross_validate_fused, fuse_dataset, PipelineConfig};
use mmscreen::trainer::TrainConfig;

fn main() {
    for (label, n, k, epochs) in [
        ("n300-e40", 300usize, 5usize, 40usize),
        ("n300-e50", 300, 5, 50),
        ("n300-k10-e30", 300, 10, 30),
        ("n250-e40", 250, 5, 40),
    ] {
        let gen = GeneratorConfig { n_records: n, ..GeneratorConfig::default() }
            .with_single_effect(TaskId::Overall, ModalityId::Wav2vec, 3.0);
        let mut wins = 0;
        let mut margins = Vec::new();
        for run_seed in 0..10u64 {
            let dataset = generate_synthetic(&gen, 0xACC9 + run_seed).unwrap();
            let fused = fuse_dataset(&dataset);
            let cfg = PipelineConfig {
                k,
                seed: 0xACC9 + run_seed,
                train: TrainConfig { epochs, ..TrainConfig::default() },
                ..PipelineConfig::default()
            };
            let outcome = cross_validate_fused(&fused, TaskId::Overall, &cfg).unwrap();
            let report = contribution(&outcome.run).unwrap();
            let mut ranked: Vec<(ModalityId, f64)> = report
                .inputs.iter().copied().zip(report.ratios.iter().copied()).collect();
            ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
            if ranked[0].0 == ModalityId::Wav2vec {
                wins += 1;
                margins.push(ranked[0].1 - ranked[1].1);
            } else {
                margins.push(-(ranked[0].1 - ranked.iter().find(|r| r.0 == ModalityId::Wav2vec).unwrap().1));
            }
        }
        println!("{label}: wins {wins}/10, margins {:?}", margins.iter().map(|m| (m * 1000.0).round() / 1000.0).collect::<Vec<_>>());
    }
}
