use std::hint::black_box;

use conjunct_core::crf::{self, CrfParams};
use conjunct_core::model::{Decoder, ModelConfig, TaggerModel};
use conjunct_core::neural::Vocab;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_crf(steps: usize, rng: &mut ChaCha8Rng) -> (Array2<f32>, CrfParams<f32>) {
    let mut draw = |r, c| Array2::from_shape_simple_fn((r, c), || rng.random_range(-1.0f32..1.0));
    let emissions = draw(steps, 4);
    let params = CrfParams {
        transitions: draw(4, 4),
        start: draw(1, 4).row(0).to_owned(),
        end: None,
    };
    (emissions, params)
}

fn bench_crf(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut group = c.benchmark_group("crf");
    for steps in [8, 32] {
        let (emissions, params) = random_crf(steps, &mut rng);
        group.bench_with_input(BenchmarkId::new("viterbi", steps), &steps, |b, _| {
            b.iter(|| crf::viterbi_decode(black_box(emissions.view()), &params))
        });
        group.bench_with_input(BenchmarkId::new("log_partition", steps), &steps, |b, _| {
            b.iter(|| crf::log_partition(black_box(emissions.view()), &params))
        });
    }
    group.finish();
}

fn bench_model(c: &mut Criterion) {
    let words: Vec<String> = (0..500).map(|i| format!("w{i}")).collect();
    let vocab = Vocab::build(words.iter().map(String::as_str));
    let chars = Vocab::build(["w", "0", "1", "2", "3", "4", "5", "6", "7", "8", "9"]);
    let utterance: Vec<String> = words[..10].to_vec();
    let mut group = c.benchmark_group("predict");
    group.sample_size(30);
    for (name, decoder, char_encoder) in [
        ("word_softmax", Decoder::Softmax, false),
        ("word_crf", Decoder::Crf, false),
        ("char_word_crf", Decoder::Crf, true),
    ] {
        let config = ModelConfig {
            decoder,
            char_encoder,
            ..ModelConfig::default()
        };
        let model = TaggerModel::<f32>::new(config, vocab.clone(), chars.clone(), 1).unwrap();
        group.bench_function(name, |b| b.iter(|| model.predict(black_box(&utterance)).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, bench_crf, bench_model);
criterion_main!(benches);
