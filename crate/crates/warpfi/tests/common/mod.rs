#![allow(dead_code)]

use std::path::PathBuf;

use warpfi::config::CampaignConfig;

pub fn small_gemm(master_seed: u64, per_model: u64) -> CampaignConfig {
    let mix: String = ["single-bit-flip", "double-bit-flip", "single-random-value", "warp-random-value", "warp-zero-value"]
        .iter()
        .map(|m| format!("{m} = {per_model}\n"))
        .collect();
    let text = format!(
        "[target]\nkind = \"gemm\"\nalgorithm = \"tensor-core\"\nprecision = \"fp16\"\nm = 32\nn = 24\nk = 16\ninput_seed = 3\n\
         [faults]\nclasses = [\"arithmetic\", \"loop-counter\", \"address\", \"predicate\"]\n\
         [faults.mix]\n{mix}\n[campaign]\nmaster_seed = {master_seed}\necc = \"sec-ded\"\n\
         [fit]\nfluence = 1e10\n"
    );
    CampaignConfig::from_toml(&text).unwrap()
}

pub fn assets_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("assets")
}

pub fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs")
}
