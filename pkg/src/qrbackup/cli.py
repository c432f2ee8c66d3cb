"""Command-line interface: ``qrbackup <command> ...``."""

from __future__ import annotations

import argparse
import base64
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import analysis, crypto
from .bundle import (
    BackupBundle,
    Mode,
    RecoveryInstruction,
    armor,
    encode_bundle,
    load_bundle,
)
from .entropy import SeededRandomness, system_randomness
from .errors import DirectoryUnavailableError, ParameterError, QRBackupError
from .gf256 import Share
from .protocol import (
    RecoverySession,
    SessionState,
    ShareResponse,
    TrusteeDescriptor,
    Verdict,
    absorb_response,
    create_backup,
    finish_recovery,
    open_recovery_session,
    renewal_check,
    trustee_handle_request,
)
from .transport import (
    Kind,
    Message,
    RemoteDirectory,
    decode_frame,
    directory_handler,
    encode_frame,
    make_server,
    send_request,
    trustee_handler,
)

log = logging.getLogger("qrbackup")


class CliError(QRBackupError):
    pass


def _randomness(args):
    return SeededRandomness(args.seed) if getattr(args, "seed", None) is not None else system_randomness


def _write(path: str, data: bytes | str, force: bool = True) -> None:
    p = Path(path)
    if not force and p.exists():
        raise CliError(f"{path} exists (use --force to overwrite)")
    if isinstance(data, str):
        p.write_text(data, encoding="utf-8")
    else:
        p.write_bytes(data)


def _read_public(path: str) -> crypto.PublicKey:
    return crypto.import_public_key(Path(path).read_text(encoding="utf-8"))


def _read_private(path: str) -> crypto.KeyPair:
    return crypto.import_private_key(Path(path).read_text(encoding="utf-8"))


def _parse_hostport(value: str) -> Optional[tuple[str, int]]:
    host, sep, port = value.rpartition(":")
    if sep and port.isdigit() and not Path(value).exists():
        return host or "127.0.0.1", int(port)
    return None


# -- directory

class FileDirectory:
    """Directory backed by a JSON file mapping locator -> hex public key."""

    def __init__(self, path: str):
        self.path = Path(path)

    def entries(self) -> dict[str, str]:
        if not self.path.exists():
            return {}
        return json.loads(self.path.read_text(encoding="utf-8"))

    def publish(self, locator: str, key: crypto.PublicKey) -> None:
        entries = self.entries()
        entries[locator] = key.to_bytes().hex()
        self.path.write_text(json.dumps(entries, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def lookup(self, locator: str) -> crypto.PublicKey:
        try:
            raw = self.entries()[locator]
        except (KeyError, OSError, ValueError):
            raise DirectoryUnavailableError(f"no key published for {locator!r}") from None
        return crypto.PublicKey.from_bytes(bytes.fromhex(raw))


def _directory(target: str):
    hp = _parse_hostport(target)
    return RemoteDirectory(*hp) if hp else FileDirectory(target)


# -- instruction files

INSTRUCTION_KEYS = (
    "owner_display_name",
    "owner_key_fingerprint",
    "directory_locator",
    "verification_policy",
    "legal_agent",
    "freeform_note",
)


def parse_instruction(text: str, owner: Optional[crypto.KeyPair] = None) -> RecoveryInstruction:
    """Parse ``key = value`` lines into a RecoveryInstruction.

    Blank lines and ``#`` comments are skipped; values may be double-quoted.
    A missing fingerprint is filled from ``owner``.
    """
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep:
            raise CliError(f"instruction line {lineno}: expected key = value")
        if key not in INSTRUCTION_KEYS:
            raise CliError(f"instruction line {lineno}: unknown key {key!r}")
        if len(value) >= 2 and value[0] == value[-1] == '"':
            value = value[1:-1]
        values[key] = value
    if "owner_key_fingerprint" not in values and owner is not None:
        values["owner_key_fingerprint"] = owner.public_key.fingerprint()
    for required in ("owner_display_name", "owner_key_fingerprint", "directory_locator"):
        if required not in values:
            raise CliError(f"instruction is missing {required}")
    try:
        return RecoveryInstruction(**values)
    except ValueError as exc:
        raise CliError(f"bad instruction: {exc}") from exc


# -- session files

def save_session(path: str, session: RecoverySession) -> None:
    doc = {
        "bundle": base64.b64encode(encode_bundle(session.bundle)).decode("ascii"),
        "state": session.state.value,
        "collected": {str(i): s.payload.hex() for i, s in sorted(session.collected.items())},
    }
    tmp = Path(path + ".tmp")
    tmp.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def load_session(path: str) -> RecoverySession:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    session = open_recovery_session(load_bundle(base64.b64decode(doc["bundle"])))
    session.collected = {int(i): Share(int(i), bytes.fromhex(p)) for i, p in doc["collected"].items()}
    session.state = SessionState(doc["state"])
    return session


# -- commands

def cmd_keygen(args) -> int:
    kp = crypto.generate_identity_keypair(_randomness(args))
    _write(args.out + ".pub", crypto.export_public_key(kp.public_key), args.force)
    _write(args.out + ".key", crypto.export_private_key(kp), args.force)
    os.chmod(args.out + ".key", 0o600)
    print(f"wrote {args.out}.pub and {args.out}.key  fingerprint {kp.public_key.fingerprint()}")
    return 0


def cmd_directory(args) -> int:
    if args.action == "serve":
        db = FileDirectory(args.db)
        server = make_server(directory_handler(db.lookup), args.host, args.port)
        print(f"directory serving {args.db} on {server.server_address[0]}:{server.server_address[1]}", flush=True)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass
        finally:
            server.server_close()
        return 0
    if args.action == "add":
        FileDirectory(args.db).publish(args.locator, _read_public(args.key))
        print(f"published {args.locator}")
        return 0
    key = _directory(args.directory).lookup(args.locator)
    if args.out:
        _write(args.out, crypto.export_public_key(key))
    else:
        sys.stdout.write(crypto.export_public_key(key))
    print(f"fingerprint {key.fingerprint()}", file=sys.stderr)
    return 0


def cmd_backup(args) -> int:
    owner = _read_private(args.owner_key)
    secret = Path(args.secret).read_bytes()
    instruction = parse_instruction(Path(args.instruction).read_text(encoding="utf-8"), owner)
    trustees = [TrusteeDescriptor(Path(p).name.removesuffix(".pub"), _read_public(p)) for p in args.trustee]
    bundle = create_backup(owner, secret, trustees, args.k, instruction, args.mode, _randomness(args))
    raw = encode_bundle(bundle)
    _write(args.out, armor(raw) if args.armor else raw)
    if args.record:
        record = [{"label": t.identity_label, "locator": t.locator, "public_key": t.public_key.to_bytes().hex()}
                  for t in trustees]
        _write(args.record, json.dumps(record, indent=2) + "\n")
    print(f"wrote {args.out}: {bundle.mode.label} ({bundle.threshold_k},{bundle.trustee_count_n})")
    return 0


def describe_bundle(bundle: BackupBundle) -> dict:
    return {
        "version": bundle.version,
        "mode": bundle.mode.label,
        "k": bundle.threshold_k,
        "n": bundle.trustee_count_n,
        "packets": len(bundle.sealed_packets),
        "encrypted_secret_bytes": len(bundle.encrypted_secret.to_bytes()) if bundle.encrypted_secret else 0,
    }


def cmd_inspect(args) -> int:
    info = describe_bundle(load_bundle(Path(args.bundle).read_bytes()))
    if args.json:
        print(json.dumps(info))
    else:
        for key, value in info.items():
            print(f"{key}: {value}")
    return 0


def cmd_recover(args) -> int:
    if args.action == "open":
        session = open_recovery_session(load_bundle(Path(args.bundle).read_bytes()))
        save_session(args.session, session)
        print(f"session {args.session}: need {session.bundle.threshold_k} of {session.bundle.trustee_count_n} shares")
        return 0

    session = load_session(args.session)
    if args.action == "request":
        request = Message.recovery_request(session.bundle.sealed_packets)
        if args.connect:
            hp = _parse_hostport(args.connect)
            if hp is None:
                raise CliError("--connect expects HOST:PORT")
            reply = send_request(*hp, request)
            return _absorb_message(args, session, reply)
        _write(args.out, encode_frame(request))
        print(f"wrote request {args.out} ({len(session.bundle.sealed_packets)} sealed packets)")
        return 0
    if args.action == "absorb":
        return _absorb_message(args, session, decode_frame(Path(args.response).read_bytes()))

    secret = finish_recovery(session)
    save_session(args.session, session)
    _write(args.out, secret)
    print(f"recovered {len(secret)} bytes into {args.out}")
    return 0


def _absorb_message(args, session: RecoverySession, msg: Message) -> int:
    result = msg.result()
    if not isinstance(result, ShareResponse):
        save_session(args.session, session)
        print(f"trustee refused: {result.reason.name.lower()}", file=sys.stderr)
        return 3
    absorb_response(session, result)
    save_session(args.session, session)
    print(f"have {len(session.collected)} of {session.bundle.threshold_k} shares; state {session.state.value}")
    return 0


def cmd_trustee(args) -> int:
    trustee = _read_private(args.key)
    directory = _directory(args.directory)
    verdict = Verdict(args.verdict)
    if args.listen is not None:
        handler = trustee_handler(trustee, directory, verdict)
        served = []

        def once(sender, msg):
            served.append(msg)
            return handler(sender, msg)

        server = make_server(once, args.host, args.listen, threaded=False)
        print(f"trustee listening on {server.server_address[0]}:{server.server_address[1]}", flush=True)
        try:
            while not served:
                server.handle_request()
        finally:
            server.server_close()
        return 0

    msg = decode_frame(Path(args.request).read_bytes())
    if msg.kind is not Kind.RECOVERY_REQUEST:
        raise CliError("request file does not hold a recovery request")
    result = trustee_handle_request(trustee, msg.sealed_packets(), directory, verdict)
    _write(args.out, encode_frame(Message.from_result(result)))
    if isinstance(result, ShareResponse):
        print(f"released share {result.share.index} into {args.out}")
        return 0
    print(f"refused: {result.reason.name.lower()} (written to {args.out})", file=sys.stderr)
    return 3


def cmd_renew_check(args) -> int:
    record = json.loads(Path(args.record).read_text(encoding="utf-8"))
    trustees = [TrusteeDescriptor(r["label"], crypto.PublicKey.from_bytes(bytes.fromhex(r["public_key"])),
                                  r.get("locator")) for r in record]
    report = renewal_check(_directory(args.directory), trustees)
    for t in report.changed:
        print(f"changed: {t.identity_label}")
    for t in report.unavailable:
        print(f"unavailable: {t.identity_label}")
    if not report:
        print("all trustee keys unchanged")
        return 0
    print("renew the backup", file=sys.stderr)
    return 4


# -- analysis commands

def _params(args) -> analysis.AnalysisParams:
    p = analysis.default_params()
    m = p.model
    q3 = args.q3 if args.q3 is not None else m.q3
    q1 = args.q1 if args.q1 is not None else (1.0 - q3) / 2 if args.q3 is not None else m.q1
    p1 = args.p1 if args.p1 is not None else m.p1
    model = analysis.AdversaryModel(
        contacts_N=args.contacts if args.contacts is not None else m.contacts_N,
        p_steal=args.p_steal if args.p_steal is not None else m.p_steal,
        p1=p1, p2=1.0 - p1, q1=q1, q2=1.0 - q3 - q1, q3=q3,
    )
    return analysis.AnalysisParams(model, args.unavailability if args.unavailability is not None else p.unavailability_U)


def _table(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    cells = [[h for h in header]] + [[f"{v:.6g}" if isinstance(v, float) else str(v) for v in r] for r in rows]
    widths = [max(len(c[i]) for c in cells) for i in range(len(header))]
    left = [bool(rows) and isinstance(rows[0][i], str) for i in range(len(header))]
    return "\n".join("  ".join(c[i].ljust(widths[i]) if left[i] else c[i].rjust(widths[i])
                               for i in range(len(header))).rstrip() for c in cells) + "\n"


def cmd_analyze(args) -> int:
    opt = analysis.optimal_threshold(_params(args), args.n)
    if args.csv:
        sys.stdout.write(analysis.curve_csv(opt.curve))
    else:
        sys.stdout.write(_table(analysis.CURVE_COLUMNS, [(r.k, r.P, r.Q, r.F) for r in opt.curve]))
        print(f"minimum F = {opt.F_min:.6g} at k = {opt.k_star}")
    return 0


def cmd_optimize(args) -> int:
    optima = analysis.optimize_over_n(_params(args), range(1, args.n_max + 1))
    if args.csv:
        sys.stdout.write(analysis.sweep_csv(optima))
    else:
        sys.stdout.write(_table(analysis.SWEEP_COLUMNS, [(o.n, o.k_star, o.F_min) for o in optima]))
    return 0


def cmd_compare(args) -> int:
    table = analysis.comparison_table(_params(args), args.k, args.n)
    if args.csv:
        sys.stdout.write(analysis.comparison_csv(table))
    else:
        rows = [(name, r.P, r.Q, r.F, f"{100 * r.F:.7g}%") for name, r in table.items()]
        sys.stdout.write(_table((*analysis.COMPARISON_COLUMNS, "F%"), rows))
    return 0


def cmd_simulate(args) -> int:
    params = _params(args)
    res = analysis.simulate_attack(params, args.k, args.n, args.trials, args.seed or 0, args.workers)
    exact = analysis.attack_success_exact(params, args.k, args.n)
    z = (res.estimate - exact) / res.std_error if res.std_error > 0 else float("nan")
    print(f"estimate {res.estimate:.6g} +/- {res.std_error:.3g} ({res.successes}/{res.trials})")
    print(f"exact    {exact:.6g}  z = {z:.2f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qrbackup", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="create an identity keypair")
    p.add_argument("--out", required=True, help="path prefix; writes PREFIX.pub and PREFIX.key")
    p.add_argument("--seed", help="deterministic key (testing only)")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("directory", help="public key directory")
    dsub = p.add_subparsers(dest="action", required=True)
    d = dsub.add_parser("serve")
    d.add_argument("--db", required=True)
    d.add_argument("--host", default="127.0.0.1")
    d.add_argument("--port", type=int, required=True)
    d = dsub.add_parser("add")
    d.add_argument("--db", required=True)
    d.add_argument("--locator", required=True)
    d.add_argument("--key", required=True, help="public key file")
    d = dsub.add_parser("get")
    d.add_argument("--directory", required=True, help="JSON db file or HOST:PORT")
    d.add_argument("--locator", required=True)
    d.add_argument("--out")
    p.set_defaults(func=cmd_directory)

    p = sub.add_parser("backup", help="create a backup bundle")
    p.add_argument("--secret", required=True)
    p.add_argument("--owner-key", required=True, help="owner private key file")
    p.add_argument("--trustee", action="append", required=True, help="trustee public key file (repeat)")
    p.add_argument("-k", type=int, required=True)
    p.add_argument("--instruction", required=True, help="key = value instruction file")
    p.add_argument("--mode", default="indirect_permission", choices=[m.label for m in Mode])
    p.add_argument("--out", required=True)
    p.add_argument("--armor", action="store_true", help="write the printable armored form")
    p.add_argument("--record", help="write the owner's private trustee list (for renew-check)")
    p.add_argument("--seed")
    p.set_defaults(func=cmd_backup)

    p = sub.add_parser("inspect", help="show bundle parameters")
    p.add_argument("bundle")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("recover", help="owner side of recovery")
    rsub = p.add_subparsers(dest="action", required=True)
    r = rsub.add_parser("open")
    r.add_argument("--bundle", required=True)
    r.add_argument("--session", required=True)
    r = rsub.add_parser("request")
    r.add_argument("--session", required=True)
    g = r.add_mutually_exclusive_group(required=True)
    g.add_argument("--out", help="write the request frame to a file")
    g.add_argument("--connect", help="send to a listening trustee at HOST:PORT and absorb the reply")
    r = rsub.add_parser("absorb")
    r.add_argument("--session", required=True)
    r.add_argument("--response", required=True)
    r = rsub.add_parser("finish")
    r.add_argument("--session", required=True)
    r.add_argument("--out", required=True)
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("trustee", help="trustee side of recovery")
    tsub = p.add_subparsers(dest="action", required=True)
    t = tsub.add_parser("respond")
    t.add_argument("--key", required=True, help="trustee private key file")
    t.add_argument("--directory", required=True, help="JSON db file or HOST:PORT")
    t.add_argument("--verdict", required=True, choices=[v.value for v in Verdict],
                   help="your judgment of whether the requester is the owner")
    g = t.add_mutually_exclusive_group(required=True)
    g.add_argument("--request", help="request frame file")
    g.add_argument("--listen", type=int, help="answer one request on this TCP port")
    t.add_argument("--out", help="response frame file (with --request)")
    t.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=cmd_trustee)

    p = sub.add_parser("renew-check", help="report trustees whose directory key changed")
    p.add_argument("--record", required=True)
    p.add_argument("--directory", required=True)
    p.set_defaults(func=cmd_renew_check)

    def params_args(p):
        p.add_argument("--defaults", action="store_true", help="use the built-in real-world parameters (default)")
        p.add_argument("--contacts", "-N", type=int)
        p.add_argument("--p-steal", type=float)
        p.add_argument("--p1", type=float)
        p.add_argument("--q1", type=float)
        p.add_argument("--q3", type=float)
        p.add_argument("--unavailability", "-U", type=float)

    p = sub.add_parser("analyze", help="failure rate curve over k for one n")
    p.add_argument("-n", type=int, required=True)
    p.add_argument("--csv", action="store_true")
    params_args(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("optimize", help="optimal k and minimum failure rate for n = 1..N")
    p.add_argument("--n-max", type=int, default=10)
    p.add_argument("--csv", action="store_true")
    params_args(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("compare", help="failure rates of five backup approaches")
    p.add_argument("-k", type=int, default=3)
    p.add_argument("-n", type=int, default=5)
    p.add_argument("--csv", action="store_true")
    params_args(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("simulate", help="Monte Carlo check of the attack model")
    p.add_argument("-k", type=int, required=True)
    p.add_argument("-n", type=int, required=True)
    p.add_argument("--trials", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    params_args(p)
    p.set_defaults(func=cmd_simulate)
    return parser


def _validate(parser: argparse.ArgumentParser, args) -> None:
    if args.command == "trustee" and args.request and not args.out:
        parser.error("--out is required with --request")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _validate(parser, args)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (QRBackupError, ParameterError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
