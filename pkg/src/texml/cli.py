"""Command-line entry point, job orchestration and the batch daemon."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import socketserver
import sys
import threading
from dataclasses import dataclass, field, fields
from pathlib import Path
from xml.etree import ElementTree

from .doc import serialize_xml, validate
from .engine import convert
from .epub import EpubMetadata, build_package, default_identifier, timestamp, validate_structure
from .errors import (BindingParseError, ConstructorTemplateInvalid, FatalConversionError,
                     IoError, MetadataInvalid, SchemaViolation, TexmlError)
from .post import SPLIT_LEVELS, build_site, title_of
from .profiler import format_tsv
from .registry import Registry, load_bindings

log = logging.getLogger("texml")

FORMATS = ("xml", "html5", "epub")
EXIT_OK, EXIT_WARN, EXIT_FATAL, EXIT_USAGE = 0, 1, 2, 3
DEFAULT_TIMEOUT = 60.0


class JobInvalid(ValueError):
    pass


@dataclass(frozen=True)
class ConversionJob:
    source: str | None = None
    text: str | None = None
    format: str = "xml"
    dest: str | None = None
    splitat: str = "none"
    preloads: tuple[str, ...] = ()
    profile: bool = False
    profile_out: str | None = None
    strict: bool = False
    validate: bool = False
    timeout: float = DEFAULT_TIMEOUT
    modified: str | None = None

    def check(self) -> None:
        if (self.source is None) == (self.text is None):
            raise JobInvalid("give exactly one of an input file or inline text")
        if self.format not in FORMATS:
            raise JobInvalid(f"format must be one of {', '.join(FORMATS)}")
        if self.splitat not in SPLIT_LEVELS:
            raise JobInvalid(f"splitat must be one of {', '.join(SPLIT_LEVELS)}")
        if not isinstance(self.timeout, (int, float)) or isinstance(self.timeout, bool) or self.timeout <= 0:
            raise JobInvalid("timeout must be a positive number of seconds")
        if self.format in ("html5", "epub") and not self.dest:
            raise JobInvalid(f"--dest is required for {self.format} output")


@dataclass
class JobResult:
    status: str
    exit_code: int
    dest: str | None = None
    log: str = ""
    output: bytes | None = None
    profile: str | None = None
    lines: list[str] = field(default_factory=list, repr=False)


def _fail(code: int, message: str, dest: str | None = None) -> JobResult:
    return JobResult("error", code, dest, message, lines=[message])


def _write(path: Path, data: bytes) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _modified(job: ConversionJob) -> str:
    if job.modified:
        return job.modified
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch and epoch.isdigit():
        return timestamp(int(epoch))
    if job.source is not None:
        return timestamp(int(Path(job.source).stat().st_mtime))
    return timestamp()


def run_job(job: ConversionJob, registry: Registry | None = None) -> JobResult:
    """Run one conversion end to end; never raises for conversion problems."""
    try:
        job.check()
    except JobInvalid as exc:
        return _fail(EXIT_USAGE, f"error: {exc}")
    name = job.source or "<text>"
    if registry is None:
        try:
            registry = load_bindings(job.preloads)
        except (BindingParseError, ConstructorTemplateInvalid) as exc:
            return _fail(EXIT_USAGE, f"error: {exc}")
    if job.text is not None:
        source = job.text
    else:
        try:
            source = Path(job.source).read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            return _fail(EXIT_USAGE, f"error: cannot read {job.source}: {exc}")

    try:
        doc = convert(source, registry, strict=job.strict, profile=job.profile, timeout=job.timeout)
    except FatalConversionError as exc:
        where = f"{exc.line}:{exc.column}:" if exc.line is not None else ""
        return _fail(EXIT_FATAL, f"{name}:{where} error: {exc.message}", job.dest)

    output = None
    problems: list[str] = []
    try:
        if job.format == "xml":
            data = serialize_xml(doc)
            if job.validate:
                problems = [str(v) for v in validate(doc)]
            if job.dest:
                _write(Path(job.dest), data)
            else:
                output = data
            messages = doc.messages
        else:
            resolved, pages, files = build_site(doc, job.splitat)
            messages = resolved.messages
            if job.format == "html5":
                for path, data in files.items():
                    _write(Path(job.dest) / path, data)
                    if job.validate:
                        try:
                            ElementTree.fromstring(data)
                        except ElementTree.ParseError as exc:
                            problems.append(f"{path}: {exc}")
            else:
                title = title_of(resolved.root) or Path(name).stem or "Untitled"
                digest = hashlib.sha256(b"".join(files[p.path] for p in pages)).digest()
                meta = EpubMetadata(default_identifier(title, digest), title, "en", _modified(job))
                data = build_package(pages, {}, meta, rendered=files)
                if job.validate:
                    problems = [str(v) for v in validate_structure(data)]
                _write(Path(job.dest), data)
    except (IoError, MetadataInvalid) as exc:
        return _fail(EXIT_USAGE, f"error: {exc}", job.dest)
    except (SchemaViolation, TexmlError) as exc:
        return _fail(EXIT_FATAL, f"{name}: error: {exc}", job.dest)

    lines = []
    for m in messages:
        where = f"{m.line}:{m.column}:" if m.line is not None else ""
        lines.append(f"{name}:{where} {m.level}: {m.text}")
    for p in problems:
        lines.append(f"{name}: error: validation failed: {p}")

    profile = None
    if job.profile:
        profile = format_tsv(doc.profile)
        if job.profile_out:
            try:
                _write(Path(job.profile_out), profile.encode("utf-8"))
            except IoError as exc:
                return _fail(EXIT_USAGE, f"error: {exc}", job.dest)

    if problems:
        status, code = "error", EXIT_FATAL
    elif any(m.level == "warning" for m in messages):
        status, code = "warn", EXIT_WARN
    else:
        status, code = "ok", EXIT_OK
    return JobResult(status, code, job.dest, "\n".join(lines), output, profile, lines)


# -- daemon ---------------------------------------------------------------------

_REQUEST_FIELDS = {f.name for f in fields(ConversionJob)}


def job_from_request(obj) -> ConversionJob:
    if not isinstance(obj, dict):
        raise JobInvalid("request must be a JSON object")
    unknown = set(obj) - _REQUEST_FIELDS
    if unknown:
        raise JobInvalid(f"unknown request fields: {', '.join(sorted(unknown))}")
    kwargs = dict(obj)
    preloads = kwargs.get("preloads", [])
    if not isinstance(preloads, list) or not all(isinstance(p, str) for p in preloads):
        raise JobInvalid("preloads must be a list of paths")
    kwargs["preloads"] = tuple(preloads)
    for key in ("source", "text", "format", "dest", "splitat", "profile_out", "modified"):
        if key in kwargs and kwargs[key] is not None and not isinstance(kwargs[key], str):
            raise JobInvalid(f"{key} must be a string")
    for key in ("profile", "strict", "validate"):
        if key in kwargs and not isinstance(kwargs[key], bool):
            raise JobInvalid(f"{key} must be true or false")
    job = ConversionJob(**kwargs)
    job.check()
    return job


class RegistryCache:
    """Binding registries keyed by preload list, built once per daemon."""

    def __init__(self):
        self._lock = threading.Lock()
        self._cache: dict[tuple, Registry] = {}

    def get(self, preloads: tuple[str, ...]) -> Registry:
        with self._lock:
            reg = self._cache.get(preloads)
            if reg is None:
                reg = self._cache[preloads] = load_bindings(preloads)
            return reg


def handle_request(line: bytes | str, cache: RegistryCache) -> dict:
    try:
        if isinstance(line, bytes):
            line = line.decode("utf-8")
        job = job_from_request(json.loads(line))
    except (ValueError, TypeError, UnicodeDecodeError) as exc:
        return {"status": "error", "dest": None, "log": f"malformed request: {exc}"}
    try:
        registry = cache.get(job.preloads)
    except (BindingParseError, ConstructorTemplateInvalid) as exc:
        return {"status": "error", "dest": job.dest, "log": f"error: {exc}"}
    result = run_job(job, registry)
    resp = {"status": result.status, "dest": result.dest, "log": result.log}
    if result.output is not None:
        resp["output"] = result.output.decode("utf-8")
    if result.profile is not None and not job.profile_out:
        resp["profile"] = result.profile
    return resp


def serve_stream(rfile, wfile, cache: RegistryCache) -> None:
    """Answer newline-delimited JSON requests in order until EOF."""
    for raw in rfile:
        if not raw.strip():
            continue
        resp = handle_request(raw, cache)
        wfile.write(json.dumps(resp, ensure_ascii=False).encode("utf-8") + b"\n")
        wfile.flush()


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        serve_stream(self.rfile, self.wfile, self.server.cache)


class DaemonServer(socketserver.ThreadingMixIn, socketserver.UnixStreamServer):
    daemon_threads = True

    def __init__(self, path: str, cache: RegistryCache):
        self.cache = cache
        super().__init__(path, _Handler)


def daemon_loop(cache: RegistryCache, socket_path: str | None = None) -> None:
    if socket_path is None:
        serve_stream(sys.stdin.buffer, sys.stdout.buffer, cache)
        return
    if os.path.exists(socket_path):
        os.unlink(socket_path)
    with DaemonServer(socket_path, cache) as server:
        log.info("listening on %s", socket_path)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass
        finally:
            os.unlink(socket_path)


# -- command line ---------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="texml", description="Convert TeX/LaTeX to semantic XML, HTML5 or EPUB 3.")
    p.add_argument("input", nargs="?", help="TeX source file")
    p.add_argument("--format", choices=FORMATS, default="xml")
    p.add_argument("--dest", help="output file (xml, epub) or directory (html5)")
    p.add_argument("--splitat", choices=SPLIT_LEVELS, default="none",
                   help="page splitting for html5/epub output")
    p.add_argument("--preload", action="append", default=[], metavar="FILE",
                   help="binding file to load after the standard set (repeatable)")
    p.add_argument("--profile", action="store_true", help="report per-binding timings")
    p.add_argument("--profile-out", metavar="FILE", help="write the profile TSV here instead of stderr")
    p.add_argument("--strict", action="store_true", help="treat recoverable errors as fatal")
    p.add_argument("--validate", action="store_true", help="validate the output after writing")
    p.add_argument("--timeout", type=float, default=DEFAULT_TIMEOUT, metavar="SECS")
    p.add_argument("--modified", metavar="STAMP", help="EPUB modified timestamp (CCYY-MM-DDThh:mm:ssZ)")
    p.add_argument("--daemon", action="store_true", help="serve newline-delimited JSON jobs")
    p.add_argument("--socket", metavar="PATH", help="listen on a Unix socket instead of stdio")
    p.add_argument("--log", metavar="FILE", help="also write diagnostics to FILE")
    p.add_argument("-q", "--quiet", action="store_true", help="only report errors")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def _setup_logging(args) -> None:
    level = logging.ERROR if args.quiet else logging.DEBUG if args.verbose > 1 else \
        logging.INFO if args.verbose else logging.WARNING
    log.setLevel(logging.DEBUG)
    log.handlers.clear()
    log.propagate = False
    err = logging.StreamHandler(sys.stderr)
    err.setLevel(level)
    err.setFormatter(logging.Formatter("%(message)s"))
    log.addHandler(err)
    if args.log:
        fh = logging.FileHandler(args.log, encoding="utf-8")
        fh.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
        log.addHandler(fh)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _setup_logging(args)
    except OSError as exc:
        print(f"texml: error: cannot open log file: {exc}", file=sys.stderr)
        return EXIT_USAGE

    if args.daemon:
        cache = RegistryCache()
        try:
            cache.get(tuple(args.preload))
        except (BindingParseError, ConstructorTemplateInvalid) as exc:
            log.error("error: %s", exc)
            return EXIT_USAGE
        daemon_loop(cache, args.socket)
        return EXIT_OK

    if args.input is None:
        parser.error("the input file is required (or use --daemon)")
    job = ConversionJob(source=args.input, format=args.format, dest=args.dest, splitat=args.splitat,
                        preloads=tuple(args.preload), profile=args.profile,
                        profile_out=args.profile_out, strict=args.strict, validate=args.validate,
                        timeout=args.timeout, modified=args.modified)
    result = run_job(job)
    for line in result.lines:
        if " error: " in line or line.startswith("error:"):
            log.error("%s", line)
        else:
            log.warning("%s", line)
    if result.output is not None:
        sys.stdout.buffer.write(result.output)
        sys.stdout.buffer.flush()
    if result.profile is not None and not args.profile_out:
        sys.stderr.write(result.profile)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
