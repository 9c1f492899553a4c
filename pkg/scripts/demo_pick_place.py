"""Record and replay a canonical pick-and-place run.

Synthesizes an inbound trace that stares at the cup for ~3.3 s, then at an
empty patch of table until the arm finishes, feeds it through a session
with the identity gaze model, and writes both files:

    demo_out/trace.ndjson        inbound messages
    demo_out/transcript.ndjson   outbound messages

Replaying the trace a second time reproduces the transcript byte for byte.
"""

import argparse
import json
import pathlib
import sys

from gazepick.session import Session, encode, identity_model, replay


def build_trace(width=1280.0, height=720.0):
    lines = [encode({"type": "tick", "t": 0.0})]
    for k in range(1, 400):
        t = k * 1000.0 / 30.0
        if k <= 100:
            u, v = 300.0 / width, 200.0 / height  # cup box center
        else:
            u, v = 1000.0 / width, 600.0 / height  # empty table
        lines.append(encode({"type": "gaze", "t": t, "u": u, "v": v}))
        if k % 30 == 0:
            lines.append(encode({"type": "tick", "t": t}))
    for k in range(1, 40):
        lines.append(encode({"type": "tick", "t": 13300.0 + k * 250.0}))
    return lines


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", type=pathlib.Path, default=pathlib.Path("demo_out"))
    args = parser.parse_args(argv)

    trace = build_trace()
    session = Session(sid="demo", model=identity_model(1280.0, 720.0))
    transcript = replay(trace, session)

    args.out_dir.mkdir(parents=True, exist_ok=True)
    (args.out_dir / "trace.ndjson").write_text("\n".join(trace) + "\n")
    (args.out_dir / "transcript.ndjson").write_text("\n".join(transcript) + "\n")

    events = [json.loads(l) for l in transcript if json.loads(l)["type"] == "robot_event"]
    print(f"{len(trace)} inbound messages, {len(transcript)} outbound")
    for e in events:
        summary = e.get("payload", {}).get("target", "")
        print(f"  t={e['t']:9.1f}  {e['event']:18s} {summary}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
