"""
Main Application Entry Point
ptychoprior - ptychographic reconstruction with a generative prior
"""
import argparse
import csv
import os
import sys

from monitor_config import MonitorConfig
from ptycho_config import PtychoConfig
from ptychoprior.core.ptyf import write_field
from ptychoprior.core.rng import Rng
from ptychoprior.errors import PtychoError


def cmd_simulate(args):
    from ptychoprior.services import simulation_service as sim

    window = sim.probe_window_for(args.probe_diameter)
    step = args.step if args.step else sim.step_for_overlap(args.overlap, args.probe_diameter)
    phantom = None
    if args.phantom_image:
        phantom = sim.load_phantom_image(args.phantom_image, args.size)
    elif args.noise_phantom:
        phantom = sim.make_noise_phantom(args.size, Rng(args.seed).split(2))
    print(f"🚀 Simulating N={args.size}, M={window}, step={step}px, sigma={args.sigma}, seed={args.seed}")
    stack, probe, phantom = sim.run_simulation(args.size, args.probe_diameter, step, args.sigma, args.seed,
                                               args.defocus, phantom)
    sim.save_stack(args.out, stack, probe, phantom)
    print(f"✅ {stack.pattern.count} frames, overlap {stack.pattern.overlap:.2f}")
    return 0


def cmd_epie(args):
    from ptychoprior.services import epie_service, evaluation_service, simulation_service

    stack, probe, phantom = simulation_service.load_stack(args.data)
    cfg = epie_service.EpieConfig(alpha=args.alpha, iterations=args.iterations, init=args.init, seed=args.seed)
    obj = epie_service.epie_reconstruct(stack, probe, cfg)
    write_field(args.out, obj)
    phase_path = f"{os.path.splitext(args.out)[0]}.phase.ptyf"
    write_field(phase_path, evaluation_service.object_phase(obj, phantom.phase if phantom else None))
    print(f"📊 L1 amplitude loss: {epie_service.l1_amplitude_loss(stack, probe, obj):.6g}")
    print(f"✅ ePIE object written to {args.out}, phase to {phase_path}")
    return 0


def cmd_train_gan(args):
    from ptychoprior.services import gan_service, simulation_service

    cfg = gan_service.GanTrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr_g=args.lr, lr_d=args.lr,
                                     seed=args.seed, dataset_size=args.dataset_size)
    print(f"🔄 Building {cfg.dataset_size} training phantoms ({args.size}px)")
    dataset = simulation_service.make_phantom_dataset(cfg.dataset_size, args.size, Rng(args.seed).split(100))
    generator, discriminator, history = gan_service.train_gan(dataset, cfg)
    gan_service.save_gan(args.out, generator, discriminator)
    curve = f"{args.out}.history.csv"
    with open(curve, 'w', encoding='utf-8', newline='') as handle:
        writer = csv.DictWriter(handle, fieldnames=['step', 'epoch', 'loss_d', 'loss_g'], lineterminator='\n')
        writer.writeheader()
        writer.writerows(history)
    print(f"💾 Training curve written to {curve}")
    return 0


_LOSS_NAMES = {'poisson': 'poisson_nll', 'l1': 'l1_intensity'}


def cmd_reconstruct(args):
    from ptychoprior.services import reconstruction_service, simulation_service

    stack, probe, _ = simulation_service.load_stack(args.data)
    lambdas = {name: value for name, value in (('lambda1', args.lambda1), ('lambda2', args.lambda2))
               if value is not None}
    cfg = reconstruction_service.config_for_stack(
        stack,
        **lambdas,
        loss_kind=_LOSS_NAMES[args.loss],
        latent_loss_kind=_LOSS_NAMES[args.latent_loss],
        latent_lr=args.latent_lr,
        latent_steps=args.latent_steps,
        weight_lr=args.weight_lr,
        stage_steps=args.stage_len,
        total_steps=args.total_steps,
        direction=f"{args.direction}_first",
        progressive=not args.no_progressive,
        seed=args.seed,
        workers=args.workers,
        literal_abs_poisson=args.literal_abs,
    )
    reconstruction_service.reconstruct(stack, probe, args.gan, cfg, args.out)
    return 0


def cmd_evaluate(args):
    from ptychoprior.services import evaluation_service

    evaluation_service.evaluate_files(args.recon, args.truth, args.out)
    return 0


def cmd_sweep(args):
    from ptychoprior.services import sweep_service

    spec = sweep_service.SweepSpec.load(args.spec)
    if args.workers:
        spec = sweep_service.spec_with_overrides(spec, {'workers': args.workers})
    report = sweep_service.run_sweep(spec, args.gan, args.out)
    print(f"📊 Median SSIM over seeds:\n{sweep_service.format_summary(sweep_service.summarize(report.rows))}")
    return 0


def cmd_serve(args):
    from ptychoprior.monitor import create_app

    app, socketio = create_app()

    print("🔧 Available routes:")
    for rule in app.url_map.iter_rules():
        print(f"   {rule.rule} -> {rule.endpoint}")

    print("🚀 Starting sweep monitor...")
    print(f"🌐 Server: http://{args.host}:{args.port}")
    socketio.run(app, host=args.host, port=args.port, debug=MonitorConfig.FLASK_DEBUG,
                 allow_unsafe_werkzeug=True)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog='ptychoprior',
                                     description='Ptychography simulation, ePIE and generative-prior reconstruction')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('simulate', help='simulate a diffraction stack', allow_abbrev=False)
    p.add_argument('--n', '--size', dest='size', type=int, default=PtychoConfig.OBJECT_SIZE)
    p.add_argument('--probe-diam', '--probe-diameter', dest='probe_diameter', type=int,
                   default=PtychoConfig.PROBE_DIAMETER)
    p.add_argument('--defocus', type=float, default=PtychoConfig.PROBE_DEFOCUS)
    p.add_argument('--step', type=int, default=None, help='scan step in pixels (overrides --overlap)')
    p.add_argument('--overlap', type=float, default=0.5)
    p.add_argument('--sigma', type=float, default=PtychoConfig.NOISE_SIGMA)
    p.add_argument('--seed', type=int, default=PtychoConfig.SEED)
    source = p.add_mutually_exclusive_group()
    source.add_argument('--phantom-image', default=None, help='grayscale image used as the phase phantom')
    source.add_argument('--noise-phantom', action='store_true', help='uniform random phase phantom')
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser('epie', help='ePIE baseline reconstruction', allow_abbrev=False)
    p.add_argument('--data', required=True)
    p.add_argument('--alpha', type=float, default=PtychoConfig.EPIE_ALPHA)
    p.add_argument('--iters', '--iterations', dest='iterations', type=int, default=PtychoConfig.EPIE_ITERATIONS)
    p.add_argument('--init', choices=['flat', 'random'], default='flat')
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out', required=True, help='PTYF file for the complex object')
    p.set_defaults(func=cmd_epie)

    p = sub.add_parser('train-gan', help='pretrain the generator / discriminator pair', allow_abbrev=False)
    p.add_argument('--size', type=int, default=PtychoConfig.OBJECT_SIZE)
    p.add_argument('--dataset-size', type=int, default=PtychoConfig.GAN_DATASET_SIZE)
    p.add_argument('--epochs', type=int, default=PtychoConfig.GAN_EPOCHS)
    p.add_argument('--batch-size', type=int, default=PtychoConfig.GAN_BATCH_SIZE)
    p.add_argument('--lr', type=float, default=PtychoConfig.GAN_LR)
    p.add_argument('--seed', type=int, default=PtychoConfig.SEED)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_train_gan)

    p = sub.add_parser('reconstruct', help='latent search + progressive weight optimisation', allow_abbrev=False)
    p.add_argument('--data', required=True)
    p.add_argument('--gan', required=True)
    p.add_argument('--loss', choices=sorted(_LOSS_NAMES), default='poisson')
    p.add_argument('--latent-loss', choices=sorted(_LOSS_NAMES), default='l1')
    p.add_argument('--lambda1', type=float, default=None,
                   help='TV weight (default: 0, or NOISY_LAMBDA1 for noisy stacks)')
    p.add_argument('--lambda2', type=float, default=None,
                   help='discriminator weight (default: 0, or NOISY_LAMBDA2 for noisy stacks)')
    p.add_argument('--latent-lr', type=float, default=PtychoConfig.LATENT_LR)
    p.add_argument('--latent-steps', type=int, default=PtychoConfig.LATENT_STEPS)
    p.add_argument('--weight-lr', type=float, default=PtychoConfig.WEIGHT_LR)
    p.add_argument('--total-steps', type=int, default=PtychoConfig.TOTAL_STEPS)
    p.add_argument('--stage-len', type=int, default=PtychoConfig.STAGE_STEPS)
    p.add_argument('--direction', choices=['shallow', 'deep'], default='shallow')
    p.add_argument('--no-progressive', action='store_true', help='train every layer from the first step')
    p.add_argument('--literal-abs', action='store_true', help='absolute value around each Poisson summand')
    p.add_argument('--workers', type=int, default=PtychoConfig.WORKERS)
    p.add_argument('--seed', type=int, default=PtychoConfig.SEED)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser('evaluate', help='SSIM of a reconstruction against the truth phantom', allow_abbrev=False)
    p.add_argument('--recon', required=True)
    p.add_argument('--truth', required=True)
    p.add_argument('--out', default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser('sweep', help='overlap / noise / method sweep', allow_abbrev=False)
    p.add_argument('--spec', required=True)
    p.add_argument('--gan', default=None)
    p.add_argument('--workers', type=int, default=None)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser('serve', help='run the sweep monitor server', allow_abbrev=False)
    p.add_argument('--host', default=MonitorConfig.FLASK_HOST)
    p.add_argument('--port', type=int, default=MonitorConfig.FLASK_PORT)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None):
    """Main application function"""
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PtychoError as e:
        print(f"❌ {type(e).__name__}: {e}")
        return 1
    except OSError as e:
        print(f"❌ I/O error: {e}")
        return 2


if __name__ == '__main__':
    sys.exit(main())
