use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use stereo_bp::cost::write_volume_dump;
use stereo_bp::hierarchy::write_trace_csv;
use stereo_bp::{
    bad_pixel_rate, build_cost_volume, random_dot_stereogram, read_disparity, read_image,
    run_hierarchical, write_pgm, BpConfig, CandidateCount, EvalReport, HierarchicalResult,
    NccParams, PyramidConfig, Schedule, SmoothnessParams,
};

use crate::args::{EvalArgs, MatchArgs, ScheduleArg, SynthArgs, TopK};

/// Sweep budgets default to 10 per scale with 20 at the finest.
fn sweep_budgets(args: &MatchArgs) -> Result<Vec<usize>> {
    let scales = args.scales;
    if scales == 0 {
        bail!("--scales must be at least 1");
    }
    match &args.sweeps {
        None => {
            let mut budgets = vec![10; scales - 1];
            budgets.push(20);
            Ok(budgets)
        }
        Some(b) if b.0.len() == 1 => Ok(vec![b.0[0]; scales]),
        Some(b) if b.0.len() == scales => Ok(b.0.clone()),
        Some(b) => bail!("--sweeps lists {} budgets for {scales} scales", b.0.len()),
    }
}

pub fn ncc_params(args: &MatchArgs) -> NccParams {
    NccParams {
        window_radius: args.window,
        data_weight: args.data_weight,
        data_truncation: args.data_truncation,
        candidate_count: match args.topk {
            TopK::All => CandidateCount::All,
            TopK::Top(k) => CandidateCount::Top(k),
        },
    }
}

pub fn pyramid_config(args: &MatchArgs) -> Result<PyramidConfig> {
    let sweeps_per_scale = sweep_budgets(args)?;
    let config = PyramidConfig {
        scale_count: args.scales,
        bp: BpConfig {
            max_sweeps: *sweeps_per_scale.last().expect("at least one scale"),
            epsilon: args.epsilon,
            schedule: match args.schedule {
                ScheduleArg::Full => Schedule::Full,
                ScheduleArg::Fast => Schedule::Fast,
            },
            smoothness: SmoothnessParams::new(args.slope, args.jump_truncation)?,
        },
        sweeps_per_scale,
    };
    config.validate()?;
    Ok(config)
}

pub fn trace_path(out: &Path) -> PathBuf {
    out.with_extension("trace.csv")
}

pub struct MatchOutput {
    pub result: HierarchicalResult,
    pub report: Option<EvalReport>,
}

pub fn run_match(args: &MatchArgs) -> Result<MatchOutput> {
    if args.max_disp == 0 {
        bail!("--max-disp must be at least 1");
    }
    let left = read_image(&args.left).context("reading left view")?;
    let right = read_image(&args.right).context("reading right view")?;
    let truth = args
        .truth
        .as_ref()
        .map(|p| read_disparity(p, args.disp_scale, !args.truth_zero_valid))
        .transpose()
        .context("reading ground truth")?;
    let config = pyramid_config(args)?;
    let params = ncc_params(args);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads.resolve())
        .build()?;
    let (volume, result) = pool.install(|| -> Result<_> {
        let volume = build_cost_volume(&left, &right, args.max_disp, &params)?;
        let result = run_hierarchical(&volume, &config)?;
        Ok((volume, result))
    })?;

    if let Some(path) = &args.dump_volume {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_volume_dump(&volume, BufWriter::new(file))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    let disparity = result.disparity.clone().with_scale_factor(args.disp_scale)?;
    write_pgm(&disparity, &args.out, true)?;
    if args.trace {
        let path = trace_path(&args.out);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        write_trace_csv(&result.trace, BufWriter::new(file))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    let report = truth
        .map(|t| {
            let border = args.border.unwrap_or(args.max_disp);
            bad_pixel_rate(&result.disparity, &t, args.threshold, border)
        })
        .transpose()?;
    Ok(MatchOutput { result, report })
}

pub fn run_eval(args: &EvalArgs) -> Result<EvalReport> {
    let result = read_disparity(&args.result, args.disp_scale, false)?;
    let truth = read_disparity(&args.truth, args.disp_scale, !args.truth_zero_valid)?;
    if result.dimensions() != truth.dimensions() {
        bail!(
            "result is {}x{} but truth is {}x{}",
            result.width(),
            result.height(),
            truth.width(),
            truth.height()
        );
    }
    Ok(bad_pixel_rate(&result, &truth, args.threshold, args.border)?)
}

pub fn run_synth(args: &SynthArgs) -> Result<()> {
    let pair = random_dot_stereogram(args.width, args.height, args.shift, args.seed)?;
    write_pgm(&pair.left, &args.left, true)?;
    write_pgm(&pair.right, &args.right, true)?;
    let truth = pair.truth.with_scale_factor(args.disp_scale)?;
    write_pgm(&truth, &args.truth, true)?;
    Ok(())
}
