use proptest::prelude::*;
use warpfi_core::fault::{
    apply_fault, generate_payload, sample_site, sample_site_where, FaultDescriptor, FaultModel, FaultSite, Lane, Payload,
    StorageClass,
};
use warpfi_core::numerics::Word32;
use warpfi_core::simt::{KernelTrace, Opcode, RegClass, TraceEntry, TraceProfile};

fn flat_kernel(instructions: usize, warps: usize) -> KernelTrace {
    let entry = TraceEntry { opcode: Opcode::Ffma, class: Some(RegClass::ArithmeticDest), lanes: u32::MAX };
    KernelTrace { warps, entries: vec![entry; instructions] }
}

#[test]
fn kernel_frequencies_follow_instruction_counts() {
    let profile = TraceProfile { kernels: vec![flat_kernel(100, 1), flat_kernel(300, 1)] };
    let n = 10_000u64;
    let mut first = 0u64;
    for seed in 0..n {
        let s = sample_site(seed, &profile, FaultModel::SingleBitFlip, &[RegClass::ArithmeticDest], StorageClass::ProtectedRegister)
            .unwrap();
        if s.kernel == 0 {
            first += 1;
        }
    }
    let expected = n as f64 * 0.25;
    let sigma = (n as f64 * 0.25 * 0.75).sqrt();
    assert!((first as f64 - expected).abs() <= 3.0 * sigma, "{first}");
    // two-cell chi-square, 1 dof, 99.9% quantile
    let e = [expected, n as f64 * 0.75];
    let o = [first as f64, (n - first) as f64];
    let chi2: f64 = o.iter().zip(&e).map(|(o, e)| (o - e).powi(2) / e).sum();
    assert!(chi2 < 10.83, "{chi2}");
}

#[test]
fn lanes_and_warps_are_uniform() {
    let profile = TraceProfile { kernels: vec![flat_kernel(3, 4)] };
    let mut lanes = [0u32; 32];
    let mut warps = [0u32; 4];
    for seed in 0..32_000 {
        let s = sample_site(seed, &profile, FaultModel::SingleRandomValue, &[RegClass::ArithmeticDest], StorageClass::ProtectedRegister)
            .unwrap();
        let Lane::One(l) = s.lane else { panic!() };
        lanes[l as usize] += 1;
        warps[s.warp as usize] += 1;
    }
    let chi2: f64 = lanes.iter().map(|&c| (c as f64 - 1000.0).powi(2) / 1000.0).sum();
    // 31 dof, 99.9% quantile
    assert!(chi2 < 61.1, "{chi2}");
    assert!(warps.iter().all(|&w| (7600..8400).contains(&w)), "{warps:?}");
}

#[test]
fn warp_wide_models_collapse_lanes() {
    let partial = TraceEntry { opcode: Opcode::Hmma, class: Some(RegClass::ArithmeticDest), lanes: 0xFF };
    let full = TraceEntry { opcode: Opcode::Hmma, class: Some(RegClass::ArithmeticDest), lanes: u32::MAX };
    let profile = TraceProfile { kernels: vec![KernelTrace { warps: 1, entries: vec![partial, full] }] };
    let mut first = 0;
    for seed in 0..4000 {
        let s = sample_site(seed, &profile, FaultModel::WarpZeroValue, &[RegClass::ArithmeticDest], StorageClass::UnprotectedDatapath)
            .unwrap();
        assert_eq!(s.lane, Lane::All);
        first += usize::from(s.dyn_inst == 0);
    }
    // one site per instruction regardless of lane count
    assert!((1800..2200).contains(&first), "{first}");
}

#[test]
fn filter_restricts_sites() {
    let cvt = TraceEntry { opcode: Opcode::Cvt, class: Some(RegClass::ArithmeticDest), lanes: 0xFF };
    let fma = TraceEntry { opcode: Opcode::Ffma, class: Some(RegClass::ArithmeticDest), lanes: u32::MAX };
    let profile = TraceProfile { kernels: vec![KernelTrace { warps: 2, entries: vec![cvt, fma, cvt] }] };
    for seed in 0..200 {
        let s = sample_site_where(seed, &profile, FaultModel::SingleBitFlip, StorageClass::ProtectedRegister, |e| e.opcode == Opcode::Ffma)
            .unwrap();
        assert_eq!(s.dyn_inst, 1);
    }
}

fn site() -> FaultSite {
    FaultSite {
        kernel: 0,
        warp: 0,
        lane: Lane::All,
        dyn_inst: 0,
        reg_class: RegClass::ArithmeticDest,
        storage: StorageClass::UnprotectedDatapath,
    }
}

#[test]
fn warp_zero_value_zeroes_every_lane() {
    let d = FaultDescriptor::new(FaultModel::WarpZeroValue, site(), 11).unwrap();
    for lane in 0..32 {
        assert_eq!(apply_fault(&d, lane, Word32(0x1234_5678)).unwrap(), Word32::ZERO);
    }
}

proptest! {
    #[test]
    fn sampling_is_deterministic(seed in any::<u64>()) {
        let profile = TraceProfile { kernels: vec![flat_kernel(17, 5), flat_kernel(9, 2)] };
        let a = sample_site(seed, &profile, FaultModel::SingleBitFlip, &[RegClass::ArithmeticDest], StorageClass::ProtectedRegister);
        let b = sample_site(seed, &profile, FaultModel::SingleBitFlip, &[RegClass::ArithmeticDest], StorageClass::ProtectedRegister);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn warp_random_payload_replays(seed in any::<u64>()) {
        let d1 = FaultDescriptor::new(FaultModel::WarpRandomValue, site(), seed).unwrap();
        let d2 = FaultDescriptor::new(FaultModel::WarpRandomValue, site(), seed).unwrap();
        prop_assert_eq!(&d1, &d2);
        let Payload::Words(w) = &d1.payload else { panic!() };
        prop_assert_eq!(w.len(), 32);
        let out: Vec<_> = (0..32).map(|l| apply_fault(&d1, l, Word32(0)).unwrap()).collect();
        prop_assert_eq!(&out, w);
    }

    #[test]
    fn bit_flip_payloads_are_valid(seed in any::<u64>()) {
        for model in [FaultModel::SingleBitFlip, FaultModel::DoubleBitFlip] {
            let Payload::Bits(bits) = generate_payload(model, seed) else { panic!() };
            let d = FaultDescriptor {
                model,
                site: FaultSite { lane: Lane::One(0), ..site() },
                payload: Payload::Bits(bits.clone()),
                seed,
            };
            let out = apply_fault(&d, 0, Word32(0)).unwrap();
            prop_assert_eq!(out.0.count_ones() as usize, bits.len());
        }
    }
}
