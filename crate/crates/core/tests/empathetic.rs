use candle_core::DType;
use ereact_core::diffusion::{
    DenoiserConfig, DiffusionSchedule, FeatureStats, GenerationMode, GenerationRequest, Models, ReactionDenoiser,
    Sampler, ScheduleConfig,
};
use ereact_core::motion::{EmotionLabel, InteractionPair, MotionSequence};
use ereact_core::nn::FeatureNormalizer;
use ereact_core::prior::{
    fit_prior, train_prior_encoder, EmotionEncoder, EncoderConfig, EncoderData, PriorTrainConfig, KMEANS_MAX_ITERS,
};
use ereact_core::synth::generate_pair;

const LEN: usize = 32;
const FPS: f64 = 16.0;

fn pairs(per_class: usize, seed_offset: u64) -> Vec<(InteractionPair, EmotionLabel)> {
    EmotionLabel::ALL
        .into_iter()
        .flat_map(|e| {
            (0..per_class).map(move |k| {
                let seed = seed_offset + (e.index() * 1000 + k) as u64;
                (generate_pair(e, LEN, FPS, seed).unwrap(), e)
            })
        })
        .collect()
}

fn both_roles(pairs: &[(InteractionPair, EmotionLabel)]) -> Vec<(MotionSequence, EmotionLabel)> {
    pairs
        .iter()
        .flat_map(|(p, e)| [(p.actor.clone(), *e), (p.reactor.clone(), *e)])
        .collect()
}

#[test]
fn empathetic_mode_reads_happiness_from_happy_actors() {
    let train = pairs(15, 0);
    let data = EncoderData { labeled: both_roles(&train), unlabeled: Vec::new(), eval: both_roles(&pairs(3, 500)) };
    let norm = FeatureNormalizer::fit(data.labeled.iter().map(|(m, _)| m)).unwrap();
    let mut encoder = EmotionEncoder::new(EncoderConfig::desk(), norm, 0, DType::F32).unwrap();
    let config = PriorTrainConfig { epochs: 15, ..PriorTrainConfig::default() };
    train_prior_encoder(&mut encoder, &data, &config).unwrap();
    let encoder = encoder.frozen().unwrap();
    let labeled: Vec<_> = data.labeled.iter().map(|(m, e)| (m, *e)).collect();
    let all: Vec<_> = data.labeled.iter().map(|(m, _)| m).collect();
    let fit = fit_prior(&encoder, &labeled, &all, KMEANS_MAX_ITERS).unwrap();

    let refs: Vec<&InteractionPair> = train.iter().map(|(p, _)| p).collect();
    let stats = FeatureStats::fit(&refs).unwrap();
    let skeleton = train[0].0.reactor.skeleton().as_ref().clone();
    let denoiser_config = DenoiserConfig { layers: 1, latent_dim: 16, heads: 2, time_dim: 8, ..DenoiserConfig::desk() };
    let denoiser =
        ReactionDenoiser::new(denoiser_config, encoder.latent_dim(), skeleton, FPS, stats, 1, DType::F32).unwrap();
    let schedule = DiffusionSchedule::new(&ScheduleConfig::default()).unwrap();
    let models = Models::new(encoder, fit.prior, denoiser, schedule).unwrap();

    let actors: Vec<_> = (0..100)
        .map(|k| generate_pair(EmotionLabel::Happiness, LEN, FPS, 9000 + k).unwrap().actor)
        .collect();
    let refs: Vec<_> = actors.iter().collect();
    let modes = vec![GenerationMode::Empathetic; actors.len()];
    let emotions = models.resolve_emotions(&refs, &modes).unwrap();
    let happy = emotions.iter().filter(|e| **e == Some(EmotionLabel::Happiness)).count();
    assert!(happy >= 85, "happiness read from {happy} of 100 actors");

    let request = GenerationRequest {
        actor: actors[0].clone(),
        mode: GenerationMode::Empathetic,
        sampler: Sampler::Ddim { steps: 2 },
        seed: 3,
    };
    let generated = models.generate(&request).unwrap();
    assert_eq!(generated.meta.emotion, emotions[0]);
    assert_eq!(generated.reactor.len(), LEN);
}
