//! Composed-network gradients, attention invariants and pedestrian-set invariance.

mod common;

use common::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use socnav::baselines::{BaselineKind, ConcatNet};
use socnav::nn::Tensor;
use socnav::policy::{PolicyArch, PolicyBatch, PolicyInput, PolicyNets, LOCAL_PLAN_LEN};

#[test]
fn composed_policy_gradients_match_finite_differences() {
    let arch = PolicyArch { beams: 24, history_k: 3 };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut nets = PolicyNets::new(arch, 5).unwrap();
    randomize_biases(&mut nets.store, &mut rng);
    let inputs: Vec<PolicyInput> = (0..3).map(|i| random_input(&arch, [0, 2, 5][i], &mut rng)).collect();
    let refs: Vec<&PolicyInput> = inputs.iter().collect();
    let batch = PolicyBatch::new(&refs, &arch).unwrap();
    let wp = weights(3, LOCAL_PLAN_LEN, &mut rng);
    let wv = weights(3, 2, &mut rng);
    let loss = |n: &PolicyNets| {
        let (p, c) = n.forward_batch(&batch).unwrap();
        dot(p.plan(), &wp) + dot(c.velocity(), &wv)
    };
    let (p, c) = nets.forward_batch(&batch).unwrap();
    let mut grads = nets.store.zero_grads();
    nets.backward_full(&p, &c, wp.clone(), wv.clone(), &mut grads).unwrap();
    let (worst, at, _, _) = spot_check(&nets.store, &grads, 3, &mut rng, &|id, i, d| {
        let mut m = nets.clone();
        m.store.get_mut(id).data_mut()[i] += d;
        loss(&m)
    });
    assert!(worst < TOL, "worst relative error {worst:.3e} at {at}");
}

#[test]
fn baseline_gradients_match_finite_differences() {
    let arch = PolicyArch { beams: 24, history_k: 3 };
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for kind in [BaselineKind::Gc, BaselineKind::Tc] {
        let mut net = ConcatNet::new(kind, arch, 3).unwrap();
        randomize_biases(&mut net.store, &mut rng);
        let lidar = Tensor::new(&[1, 2, 24], (0..48).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
        let aux = weights(2, kind.aux_len(), &mut rng);
        let wv = weights(2, 2, &mut rng);
        let c = net.forward(lidar.clone(), aux.clone()).unwrap();
        let mut grads = net.store.zero_grads();
        net.backward(&c, wv.clone(), &mut grads).unwrap();
        let (worst, at, _, _) = spot_check(&net.store, &grads, 1, &mut rng, &|id, i, d| {
            let mut m = net.clone();
            m.store.get_mut(id).data_mut()[i] += d;
            dot(m.forward(lidar.clone(), aux.clone()).unwrap().velocity(), &wv)
        });
        assert!(worst < TOL, "{kind:?} {at}: {worst:.3e}");
    }
}

#[test]
fn attention_coefficients_are_distributions() {
    let arch = PolicyArch::default();
    let nets = PolicyNets::new(arch, 21).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let inputs: Vec<PolicyInput> = (0..1000)
        .map(|_| {
            let p = rng.gen_range(0..=6);
            random_input(&arch, p, &mut rng)
        })
        .collect();
    for chunk in inputs.chunks(250) {
        let refs: Vec<&PolicyInput> = chunk.iter().collect();
        for out in nets.act_batch(&refs).unwrap() {
            let (a, b) = (out.readout.a, out.readout.b);
            assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9, "{a:?}");
            assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-9, "{b:?}");
            assert!(a.iter().chain(&b).all(|&x| x > 0.0 && x < 1.0));
        }
    }
}

#[test]
fn pedestrian_order_and_duplicates_do_not_matter() {
    let arch = PolicyArch::default();
    let nets = PolicyNets::new(arch, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..500 {
        let people = rng.gen_range(1..=6);
        let base = random_input(&arch, people, &mut rng);
        let mut shuffled = base.clone();
        shuffled.humans.shuffle(&mut rng);
        let mut duplicated = shuffled.clone();
        let extra = duplicated.humans[rng.gen_range(0..people)].clone();
        duplicated.humans.insert(rng.gen_range(0..=people), extra);
        let out = nets.act_batch(&[&base, &shuffled, &duplicated]).unwrap();
        for o in &out[1..] {
            assert_eq!(o.raw.v.to_bits(), out[0].raw.v.to_bits());
            assert_eq!(o.raw.w.to_bits(), out[0].raw.w.to_bits());
            assert!(o.plan.0.iter().zip(&out[0].plan.0).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}
