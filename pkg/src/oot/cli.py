"""Command line entry points: VM processes and the measurement scenarios."""

from __future__ import annotations

import argparse
import signal
import sys
import threading

from . import bench
from .device import DeviceSim, load_sensor_script, make_clock
from .server import ServerConfig, VmServer
from .transport import connect
from .vm.state import StackLimits
from .wat import parse_module


def _write_result(result: bench.ScenarioResult, out: str | None) -> None:
    text = result.to_csv()
    if out:
        with open(out, "w", encoding="utf-8") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def _maybe_plot(args, result: bench.ScenarioResult, plotter) -> None:
    if getattr(args, "plot_dir", None):
        from .bench import figures
        for path in plotter(figures, result, args.plot_dir):
            print(f"wrote {path}", file=sys.stderr)


def _cmd_vm(args) -> int:
    with open(args.program, encoding="utf-8") as f:
        module = parse_module(f.read())
    limits = StackLimits(max_value_stack=args.value_limit,
                         max_call_stack=args.call_limit)
    # a reconstruction VM idles until a session arrives
    config = ServerConfig(role=args.role, port=args.port, limits=limits,
                          restart_on_trap=args.restart_on_trap,
                          restart_delay_ms=args.restart_delay_ms,
                          start_running=args.role == "remote")

    devsim = None
    device_link = None
    if args.role == "remote":
        if args.sensors:
            with open(args.sensors, encoding="utf-8") as f:
                script = load_sensor_script(f.read())
        else:
            script = load_sensor_script({"sensors": {}, "clock": "virtual"})
        sink = None
        if args.master:
            host, _, port = args.master.partition(":")
            sink = connect(host or "127.0.0.1", int(port))
        devsim = DeviceSim(script, make_clock(script), sink)
    else:
        if args.remote:
            host, _, port = args.remote.partition(":")
            device_link = connect(host or "127.0.0.1", int(port))

    server = VmServer(module, config, devsim=devsim, device_link=device_link)
    print(f"{args.role} vm listening on port {server.port}", flush=True)
    stop = threading.Event()
    signal.signal(signal.SIGINT, lambda *_: stop.set())
    signal.signal(signal.SIGTERM, lambda *_: stop.set())
    server.serve(stop)
    return 0


def _cmd_bench_session_scaling(args) -> int:
    arg_list = [int(a) for a in args.args.split(",") if a]
    result = bench.scenario_session_scaling(
        arg_list, apply_limits=StackLimits(max_call_stack=args.call_limit))
    _write_result(result, args.out)
    _maybe_plot(args, result,
                lambda figs, r, d: figs.plot_session_scaling(r, d))
    return 0


def _cmd_bench_network(args) -> int:
    result = bench.scenario_network_overhead(arg=args.arg, steps=args.steps)
    _write_result(result, args.out)
    _maybe_plot(args, result,
                lambda figs, r, d: figs.plot_network_overhead(r, d))
    return 0


def _cmd_bench_proxy(args) -> int:
    result = bench.scenario_proxy_overhead(n=args.n, period_ms=args.period_ms)
    _write_result(result, args.out)
    _maybe_plot(args, result,
                lambda figs, r, d: figs.plot_proxy_overhead(r, d))
    return 0


def _cmd_bench_tma(args) -> int:
    transcript = bench.scenario_tma_walkthrough(iterations=args.iterations)
    print(transcript.render())
    if args.control:
        control = bench.scenario_tma_no_bug_control()
        print(control.render())
        return 0 if (transcript.passed and control.passed) else 1
    return 0 if transcript.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oot",
        description="Paired-VM remote debugging sandbox and its benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)

    vm = sub.add_parser("vm", help="run a VM process")
    vm.add_argument("--role", choices=("remote", "local"), required=True)
    vm.add_argument("--port", type=int, default=0)
    vm.add_argument("--program", required=True, help="WAT source file")
    vm.add_argument("--sensors", help="sensor script JSON (remote role)")
    vm.add_argument("--master", help="host:port receiving broadcast values")
    vm.add_argument("--remote", help="host:port of the device VM (local role)")
    vm.add_argument("--value-limit", type=int, default=16384)
    vm.add_argument("--call-limit", type=int, default=4096)
    vm.add_argument("--restart-on-trap", action=argparse.BooleanOptionalAction,
                    default=None)
    vm.add_argument("--restart-delay-ms", type=float, default=1000.0)
    vm.set_defaults(fn=_cmd_vm)

    bench_p = sub.add_parser("bench", help="run a measurement scenario")
    bench_sub = bench_p.add_subparsers(dest="scenario", required=True)

    ss = bench_sub.add_parser("session-scaling")
    ss.add_argument("--args", default="16,32,64,128,256,512,1024,2048,4096")
    ss.add_argument("--call-limit", type=int, default=2048)
    ss.add_argument("--out")
    ss.add_argument("--plot-dir")
    ss.set_defaults(fn=_cmd_bench_session_scaling)

    net = bench_sub.add_parser("network")
    net.add_argument("--arg", type=int, default=8192)
    net.add_argument("--steps", type=int, default=5)
    net.add_argument("--out")
    net.add_argument("--plot-dir")
    net.set_defaults(fn=_cmd_bench_network)

    px = bench_sub.add_parser("proxy")
    px.add_argument("--n", type=int, default=30)
    px.add_argument("--period-ms", type=int, default=1000)
    px.add_argument("--out")
    px.add_argument("--plot-dir")
    px.set_defaults(fn=_cmd_bench_proxy)

    tma = bench_sub.add_parser("tma")
    tma.add_argument("--iterations", type=int, default=10)
    tma.add_argument("--control", action="store_true",
                     help="also run the sensors-online control scenario")
    tma.set_defaults(fn=_cmd_bench_tma)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "restart_on_trap", None) is None and args.command == "vm":
        args.restart_on_trap = args.role == "remote"
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
