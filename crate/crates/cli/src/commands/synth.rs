use echomeasure_core::dataset::{generate_synthetic, random_spec, write_synthetic_dataset, RandomSpecOptions};
use echomeasure_core::View;

use crate::args::{SynthArgs, ViewsArg};
use crate::error::CliError;

pub fn run(args: SynthArgs) -> Result<(), CliError> {
    if args.amp_min < 0.0 || args.amp_max < args.amp_min {
        return Err(CliError::usage("need 0 <= --amp-min <= --amp-max"));
    }
    let opts = RandomSpecOptions {
        width: args.width,
        height: args.height,
        amplitude: (args.amp_min, args.amp_max),
        scale_cm_per_px: args.scale_cm_per_px,
        speckle: args.speckle,
    };
    let views: &[View] = match args.view {
        ViewsArg::Av => &[View::Av],
        ViewsArg::Lv => &[View::Lv],
        ViewsArg::Both => &[View::Av, View::Lv],
    };
    let mut samples = Vec::new();
    for &view in views {
        for seed in args.seed..args.seed + args.count {
            samples.push(generate_synthetic(&random_spec(view, seed, &opts))?);
        }
    }
    write_synthetic_dataset(&args.out, &samples)?;
    println!("wrote {} synthetic images -> {}", samples.len(), args.out.display());
    Ok(())
}
