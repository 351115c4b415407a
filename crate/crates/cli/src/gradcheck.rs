use anyhow::{bail, Result};
use codesum_core::abstracter::{AbstracterExample, AbstracterModel};
use codesum_core::extractor::{ExtractorExample, ExtractorModel};
use codesum_core::numcore::{finite_difference_check, GradCheckReport, LstmParams, ParamSet, Tape, Tensor};
use codesum_core::{AbstracterConfig, ExtractorConfig, FusionOrder, Language};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-5;
const COORDS: usize = 24;

fn lstm() -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut set = ParamSet::<f64>::new();
    let layer = LstmParams::declare(&mut set, "lstm", 3, 4, &mut rng)?;
    let bias = set.value_mut(layer.bias);
    for (k, v) in bias.data_mut().iter_mut().enumerate() {
        *v = 0.1 * (k as f64 % 5.0) - 0.2;
    }
    let x = Tensor::new(vec![2, 3], vec![0.5, -1.0, 0.25, 0.8, 0.1, -0.6])?;
    Ok(finite_difference_check(
        &mut set,
        |t, s| {
            let xv = t.constant(x.clone());
            let (h, c) = layer.zero_state(t, 2);
            let (h, c) = layer.step(t, s, xv, h, c)?;
            let (h, c) = layer.step(t, s, xv, h, c)?;
            let both = t.concat(&[h, c])?;
            let sq = t.mul(both, both)?;
            Ok(t.sum(sq))
        },
        EPS,
        64,
    )?)
}

fn extractor() -> Result<GradCheckReport> {
    let config = ExtractorConfig {
        embed_dim: 4,
        hidden_dim: 4,
        dropout: 0.0,
        max_statement_tokens: 6,
        max_statements: 8,
        language: Language::Java,
    };
    let model = ExtractorModel::<f64>::new(config, 10, 5)?;
    let examples = [
        ExtractorExample {
            statements: vec![vec![4, 5, 6], vec![7], vec![8, 9, 4, 5]],
            labels: vec![1, 0, 1],
            truncated: false,
        },
        ExtractorExample {
            statements: vec![vec![6, 6], vec![9, 8]],
            labels: vec![0, 1],
            truncated: false,
        },
    ];
    let refs: Vec<&ExtractorExample> = examples.iter().collect();
    let mut params = model.params.clone();
    Ok(finite_difference_check(&mut params, |t: &mut Tape<f64>, s| model.batch_loss(t, s, &refs), EPS, COORDS)?)
}

fn abstracter(fusion: FusionOrder, share: bool) -> Result<GradCheckReport> {
    let config = AbstracterConfig {
        embed_dim: 4,
        hidden_dim: 4,
        dropout: 0.0,
        max_code_tokens: 10,
        max_summary_len: 8,
        fusion,
        share_embeddings: share,
    };
    let model = AbstracterModel::<f64>::new(config, 8, 6)?;
    let examples = [
        AbstracterExample {
            important: vec![4, 5],
            code: vec![4, 5, 6, 7],
            comment: vec![6, 7, 4],
        },
        AbstracterExample {
            important: vec![7],
            code: vec![7, 7, 5],
            comment: vec![5],
        },
    ];
    let refs: Vec<&AbstracterExample> = examples.iter().collect();
    let mut params = model.params.clone();
    Ok(finite_difference_check(&mut params, |t: &mut Tape<f64>, s| model.batch_loss(t, s, &refs), EPS, COORDS)?)
}

pub fn run(tol: f64) -> Result<()> {
    let suites = [
        ("lstm cell", lstm()?),
        ("extractor loss", extractor()?),
        ("abstracter loss (abex, shared)", abstracter(FusionOrder::AbEx, true)?),
        ("abstracter loss (exab, separate)", abstracter(FusionOrder::ExAb, false)?),
    ];
    let mut failed = Vec::new();
    for (name, report) in &suites {
        let ok = report.passes(tol);
        println!(
            "{:<34} {:>5} coords  max rel err {:.3e}  {}",
            name,
            report.coordinates,
            report.max_rel_error,
            if ok { "ok" } else { "FAIL" }
        );
        if !ok {
            failed.push(*name);
        }
    }
    if !failed.is_empty() {
        bail!("relative error above {tol:e} in {}", failed.join(", "));
    }
    Ok(())
}
