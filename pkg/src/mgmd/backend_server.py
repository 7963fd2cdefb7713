"""Child side of the external appearance-backend protocol.

Wrap any Python scoring or detection function as an external backend::

    from mgmd.backend_server import serve
    serve("CLS", lambda crop: my_net(crop))        # crop: (32, 32) uint8

or run a built-in baseline behind the protocol::

    python -m mgmd.backend_server DET centroid
    python -m mgmd.backend_server CLS linear model.bin
"""

import sys

import numpy as np


def _read_exact(stream, n):
    buf = stream.read(n)
    if buf is None or len(buf) != n:
        raise EOFError("short read")
    return buf


def serve(kind, handler, stdin=None, stdout=None):
    """Answer requests until the parent closes stdin.

    ``handler`` gets a ``(h, w)`` uint8 array and returns a score (CLS) or a
    list of ``(x, y, w, h, conf)`` tuples in crop coordinates (DET).
    """
    stdin = stdin or sys.stdin.buffer
    stdout = stdout or sys.stdout.buffer
    hello = stdin.readline()
    if hello.rstrip(b"\n") != f"MGD/1 {kind}".encode():
        return 1
    stdout.write(b"OK\n")
    stdout.flush()
    while True:
        line = stdin.readline()
        if not line:
            return 0
        parts = line.decode("ascii").split()
        if len(parts) != 4 or parts[0] != kind:
            return 1
        rid, w, h = parts[1], int(parts[2]), int(parts[3])
        px = np.frombuffer(_read_exact(stdin, w * h), dtype=np.uint8).reshape(h, w)
        if kind == "CLS":
            stdout.write(f"CLS {rid} {float(handler(px)):.17g}\n".encode())
        else:
            dets = list(handler(px))
            out = [f"DET {rid} {len(dets)}\n"]
            out += [" ".join(f"{float(v):.17g}" for v in d) + "\n" for d in dets]
            stdout.write("".join(out).encode())
        stdout.flush()


def main(argv=None):
    from .appearance import CentroidDetector, LinearCropClassifier, PassthroughClassifier

    args = list(sys.argv[1:] if argv is None else argv)
    if len(args) < 2 or args[0] not in ("CLS", "DET"):
        print("usage: python -m mgmd.backend_server {CLS|DET} {passthrough|linear MODEL|centroid}",
              file=sys.stderr)
        return 2
    kind, name = args[0], args[1]
    if kind == "CLS" and name == "passthrough":
        handler = PassthroughClassifier().score_crop
    elif kind == "CLS" and name == "linear" and len(args) == 3:
        handler = LinearCropClassifier.load(args[2]).score_crop
    elif kind == "DET" and name == "centroid":
        handler = CentroidDetector().detect
    else:
        print(f"no built-in {kind} backend called {name!r}", file=sys.stderr)
        return 2
    return serve(kind, handler)


if __name__ == "__main__":
    sys.exit(main())
