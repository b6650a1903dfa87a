"""Drive the HTTP service, kill it mid-session, and replay after restart.

Starts the server as a real subprocess, creates a calibration and a
grading session over HTTP, SIGKILLs the process, starts a fresh one on
the same data directory, and shows that every read comes back byte for
byte identical. State lives in the append-only event log, so an unclean
death loses nothing that was acknowledged.

Run: python3 demos/04_http_service.py
"""

import signal
import socket
import subprocess
import sys
import tempfile
import time

import requests

CAL_ITEMS = [
    {"record_id": f"d{i}", "question_id": "q1",
     "question": "What is the largest planet in the solar system?",
     "correct_answer": "Jupiter", "given_answer": answer, "grade": grade, "s": s}
    for i, (s, answer, grade) in enumerate([
        (0.10, "Mars", "incorrect"),
        (0.20, "the sun", "incorrect"),
        (0.30, "Saturn", "incorrect"),
        (0.45, "jupiter", "correct"),
        (0.55, "satern", "incorrect"),
        (0.70, "Jupiter obviously", "correct"),
        (0.80, "jupiter.", "correct"),
        (0.90, "Jupiter", "correct"),
    ])
]

EXAM_ITEMS = [
    {"record_id": f"e{i}", "question_id": "q1",
     "question": "What is the largest planet in the solar system?",
     "correct_answer": "Jupiter", "given_answer": answer, "grade": grade, "s": s}
    for i, (s, answer, grade) in enumerate([
        (0.200, "venus", "incorrect"),
        (0.400, "saturn", "incorrect"),
        (0.500, "juppiter", "correct"),
        (0.800, "Jupiter!", "correct"),
        (0.375, "the big one", "incorrect"),
    ])
]


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


def start_server(data_dir: str, port: int) -> subprocess.Popen:
    proc = subprocess.Popen(
        [sys.executable, "-m", "selgrade.cli", "serve",
         "--data-dir", data_dir, "--port", str(port)],
        stdout=subprocess.DEVNULL,
        stderr=subprocess.DEVNULL,
    )
    base = f"http://127.0.0.1:{port}"
    for _ in range(100):
        try:
            if requests.get(f"{base}/health", timeout=1).ok:
                return proc
        except requests.ConnectionError:
            time.sleep(0.1)
    proc.kill()
    raise RuntimeError("server did not come up")


def main() -> None:
    with tempfile.TemporaryDirectory() as data_dir:
        port = free_port()
        base = f"http://127.0.0.1:{port}"
        server = start_server(data_dir, port)
        print(f"server up on {base}, data in {data_dir}")

        cal = requests.post(f"{base}/calibrations", json={
            "items": CAL_ITEMS,
            "constraints": {"c_min_incorrect": 1.0, "c_min_correct": 1.0},
            "exam_sizes": [5],
            "n_boot": 200,
            "seed": 0,
        }).json()
        cid = cal["calibration_id"]
        print(f"calibration {cid}: thresholds "
              f"[{cal['thresholds']['t_incorrect']}, {cal['thresholds']['t_correct']}]")

        session = requests.post(f"{base}/sessions", json={
            "calibration_id": cid, "items": EXAM_ITEMS,
        }).json()
        sid = session["session_id"]
        honest = {item["record_id"]: item["grade"] for item in EXAM_ITEMS}
        queue = requests.get(f"{base}/sessions/{sid}/queue", params={"k": 2}).json()
        for entry in queue["queue"]:
            requests.post(f"{base}/sessions/{sid}/grades", json={
                "record_id": entry["record_id"], "grade": honest[entry["record_id"]],
            })
        print(f"session {sid}: graded {len(queue['queue'])} of the deferred queue, "
              f"{queue['remaining'] - len(queue['queue'])} still pending")

        reads = [f"/calibrations/{cid}", f"/sessions/{sid}", f"/sessions/{sid}/queue"]
        before = {path: requests.get(base + path).content for path in reads}

        server.send_signal(signal.SIGKILL)
        server.wait()
        print("killed the server with SIGKILL")

        server = start_server(data_dir, port)
        after = {path: requests.get(base + path).content for path in reads}
        server.terminate()
        server.wait()

        for path in reads:
            same = "identical" if before[path] == after[path] else "DIFFERENT"
            print(f"  {path}: {same} after restart")


if __name__ == "__main__":
    main()
