use rayon::prelude::*;
use seedevo::genome::{init_weights, noise};
use seedevo::network::ArchitectureDescriptor;
use seedevo::rng::DeterministicRng;
use seedevo::Genome;

fn random_genomes(count: usize, seed: u64) -> Vec<Genome> {
    let mut rng = DeterministicRng::new(seed);
    (0..count)
        .map(|_| {
            let len = 1 + rng.below(20);
            let sigma = [0.002f32, 0.05, 0.1, 1.0][rng.below(4)];
            Genome::new((0..len).map(|_| rng.next_u64()).collect(), sigma).unwrap()
        })
        .collect()
}

fn arch() -> ArchitectureDescriptor {
    ArchitectureDescriptor::parse("in:7;dense:9;out:5").unwrap()
}

#[test]
fn appending_a_seed_adds_its_scaled_noise() {
    let arch = arch();
    let mut rng = DeterministicRng::new(99);
    for g in random_genomes(100, 1) {
        let s = rng.next_u64();
        let child = g.mutate(s);
        let parent_w = g.decode(&arch);
        let eps = noise(s, parent_w.len());
        let expected: Vec<f32> = parent_w.iter().zip(&eps).map(|(w, e)| w + g.sigma() * e).collect();
        assert_eq!(child.decode(&arch), expected);
    }
}

#[test]
fn full_decode_is_init_plus_every_noise_in_order() {
    let arch = arch();
    for g in random_genomes(20, 2) {
        let mut w = init_weights(g.seeds()[0], &arch);
        for &s in &g.seeds()[1..] {
            for (wi, e) in w.iter_mut().zip(noise(s, arch.parameter_count())) {
                *wi += g.sigma() * e;
            }
        }
        assert_eq!(g.decode(&arch), w);
    }
}

#[test]
fn decoding_is_identical_across_thread_counts() {
    let arch = arch();
    let genomes = random_genomes(100, 3);
    let decode_with = |threads: usize| -> Vec<Vec<u32>> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            genomes
                .par_iter()
                .map(|g| g.decode(&arch).iter().map(|v| v.to_bits()).collect())
                .collect()
        })
    };
    let one = decode_with(1);
    assert_eq!(one, decode_with(8));
    assert_eq!(one, decode_with(1));
}

#[test]
fn checkpoint_round_trips_random_genomes() {
    let arch = arch();
    for g in random_genomes(50, 4) {
        let (back, back_arch) = Genome::from_checkpoint(&g.to_checkpoint(&arch)).unwrap();
        assert_eq!(back, g);
        assert_eq!(back_arch, arch);
        assert_eq!(back.decode(&arch), g.decode(&arch));
    }
}
