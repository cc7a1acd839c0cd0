import numpy as np
import pytest

from qauction import cli


def run_cli(args, capsys):
    code = cli.main(args)
    out = capsys.readouterr().out
    return code, out


def parse_csv(text):
    comments, header, rows = {}, None, []
    for line in text.strip().splitlines():
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                key, _, value = body.partition("=")
                comments[key.strip()] = value.strip()
            continue
        if header is None:
            header = line.split(",")
            continue
        rows.append(line.split(","))
    return comments, header, rows


def column(header, rows, name, cast=float):
    idx = header.index(name)
    return [cast(r[idx]) for r in rows]


class TestConverge:
    def test_row_count_and_convergence(self, capsys):
        code, out = run_cli(["converge", "--bids", "10,11", "--steps", "20",
                             "--delta", "1.5"], capsys)
        assert code == 0
        comments, header, rows = parse_csv(out)
        assert header == ["s", "f", "success_prob", "leakage"]
        assert len(rows) == 21
        success = column(header, rows, "success_prob")
        assert success[0] == pytest.approx(0.25)
        assert success[-1] >= 0.9
        assert comments["winner"] == "0011"

    def test_single_step(self, capsys):
        code, out = run_cli(["converge", "--steps", "1"], capsys)
        assert code == 0
        _, _, rows = parse_csv(out)
        assert len(rows) == 2

    def test_tie_exits_2(self, capsys):
        code = cli.main(["converge", "--bids", "10,10"])
        captured = capsys.readouterr()
        assert code == 2
        assert "tied" in captured.err

    def test_auto_delta(self, capsys):
        code, out = run_cli(["converge", "--steps", "16", "--delta", "auto"], capsys)
        assert code == 0
        comments, _, _ = parse_csv(out)
        assert float(comments["delta"]) == pytest.approx(0.25)

    def test_locked_defense(self, capsys):
        code, out = run_cli(["converge", "--bids", "11,10", "--defense", "lock",
                             "--alpha1", "0.9", "--alpha2", "0.7"], capsys)
        assert code == 0
        _, header, rows = parse_csv(out)
        assert max(column(header, rows, "leakage")) <= 1e-9

    def test_lock_needs_alphas(self, capsys):
        code = cli.main(["converge", "--defense", "lock"])
        assert code == 1
        assert "alpha" in capsys.readouterr().err


class TestVariants:
    def test_initial_row_and_ordering(self, capsys):
        code, out = run_cli(["variants", "--bids", "10,11", "--steps", "40",
                             "--delta", "1"], capsys)
        assert code == 0
        _, header, rows = parse_csv(out)
        assert header == ["s", "f", "exact", "zeroth", "first"]
        assert len(rows) == 41
        first_row = rows[0]
        assert [float(x) for x in first_row[2:]] == [0.25, 0.25, 0.25]
        # the symmetric splitting converges faster: it dominates the plain
        # splitting at most steps (though not at the very last one)
        zeroth = column(header, rows, "zeroth")
        first = column(header, rows, "first")
        dominated = sum(1 for z, fo in zip(zeroth, first) if fo >= z)
        assert dominated > len(rows) * 0.75

    def test_small_step_agreement(self, capsys):
        # keep total time S*delta = 40 while shrinking delta; all three
        # integrators land on the same curve
        code, out = run_cli(["variants", "--bids", "10,11", "--steps", "1600",
                             "--delta", "0.025"], capsys)
        assert code == 0
        _, header, rows = parse_csv(out)
        exact = np.array(column(header, rows, "exact"))
        zeroth = np.array(column(header, rows, "zeroth"))
        first = np.array(column(header, rows, "first"))
        assert np.max(np.abs(exact - zeroth)) <= 1e-3
        assert np.max(np.abs(exact - first)) <= 1e-3


class TestGap:
    def test_restricted_tracks(self, capsys):
        code, out = run_cli(["gap", "--bids", "10,11", "--steps", "20"], capsys)
        assert code == 0
        comments, header, rows = parse_csv(out)
        assert header[:2] == ["s", "f"]
        final = rows[-1]
        lams = [float(x) for x in final[2:6]]
        np.testing.assert_allclose(lams, [-3, -2, 0, 0], atol=1e-9)
        gaps = column(header, rows, "gap")
        assert min(gaps) > 0
        assert float(comments["g_min"]) == pytest.approx(min(gaps), rel=1e-9)

    def test_spurious_tracks(self, capsys):
        code, out = run_cli(["gap", "--bids", "10,11", "--table", "spurious"], capsys)
        assert code == 0
        _, header, rows = parse_csv(out)
        lams = [float(x) for x in rows[-1][2:6]]
        np.testing.assert_allclose(lams, [-5, -3, -2, 0], atol=1e-9)
        assert min(column(header, rows, "gap")) > 0

    def test_locked_tracks_shrink_gap(self, capsys):
        code, honest = run_cli(["gap", "--bids", "11,10"], capsys)
        assert code == 0
        code, locked = run_cli(["gap", "--bids", "11,10", "--defense", "lock",
                                "--alpha1", "0.9", "--alpha2", "0.7"], capsys)
        assert code == 0
        g_honest = float(parse_csv(honest)[0]["g_min"])
        g_locked = float(parse_csv(locked)[0]["g_min"])
        assert 0 < g_locked < g_honest

    def test_full_space_tracks(self, capsys):
        code, out = run_cli(["gap", "--bids", "10,11", "--restrict", "false"], capsys)
        assert code == 0
        _, header, _ = parse_csv(out)
        assert header[-1] == "gap"
        assert len(header) == 2 + 16 + 1


class TestAttack:
    def test_probe_columns_and_values(self, capsys):
        code, out = run_cli(["attack", "--attack", "probe_basis", "--bids", "10,11",
                             "--rounds", "5", "--trials", "4000"], capsys)
        assert code == 0
        comments, header, rows = parse_csv(out)
        assert header == ["N", "basis_closed", "basis_mc", "povm_closed",
                          "povm_mc", "povm_mc_majority"]
        basis = column(header, rows, "basis_closed")
        assert basis[0] == 0.25
        assert basis[3] == 0.87890625
        p_e = float(comments["p_e_bidder0"])
        assert 0.1102 <= p_e <= 0.1122
        povm_closed = column(header, rows, "povm_closed")
        assert povm_closed[0] == pytest.approx((1 - p_e) ** 2, rel=1e-9)
        assert povm_closed[3] > 0.999

    def test_locked_counterparts(self, capsys):
        code, out = run_cli(["attack", "--attack", "probe_povm", "--bids", "11,10",
                             "--rounds", "4", "--trials", "2000", "--defense", "lock",
                             "--alpha1", "0.9", "--alpha2", "0.7"], capsys)
        assert code == 0
        _, header, rows = parse_csv(out)
        for name in ("basis_closed_lock", "basis_mc_lock", "povm_closed_lock",
                     "povm_mc_lock", "povm_mc_majority_lock"):
            assert name in header
        plain = column(header, rows, "basis_closed")
        locked = column(header, rows, "basis_closed_lock")
        assert all(lo < pl for lo, pl in zip(locked, plain))

    def test_spurious_curve(self, capsys):
        code, out = run_cli(["attack", "--attack", "spurious", "--bids", "10,11"], capsys)
        assert code == 0
        comments, header, rows = parse_csv(out)
        assert comments["revealing"] == "1011"
        reveal = column(header, rows, "revealing_prob")
        assert reveal[0] == pytest.approx(0.25)
        assert reveal[-1] >= 0.9

    def test_spurious_with_collusion(self, capsys):
        code, out = run_cli(["attack", "--attack", "spurious", "--bids", "10,11",
                             "--defense", "collude"], capsys)
        assert code == 0
        _, header, rows = parse_csv(out)
        assert max(column(header, rows, "revealing_prob")) <= 1e-18

    def test_requires_attack_value(self, capsys):
        assert cli.main(["attack"]) == 1


class TestPovmCommand:
    def test_report(self, capsys):
        code, out = run_cli(["povm"], capsys)
        assert code == 0
        lines = out.splitlines()
        p_e = float(next(l for l in lines if l.startswith("P_e")).split("=")[1])
        assert 0.1102 <= p_e <= 0.1122
        assert any(l.strip() == "optimality_check = true" for l in lines)


class TestCircuitVerify:
    def test_pass_and_fail(self, tmp_path, capsys):
        circuit = tmp_path / "bidder.txt"
        circuit.write_text("H q0\nCNOT q0 q1\n")
        code, out = run_cli(["circuit-verify", str(circuit), "bidder:11"], capsys)
        assert code == 0
        assert "result=pass" in out
        code, out = run_cli(["circuit-verify", str(circuit), "bidder:01"], capsys)
        assert code == 0
        assert "result=fail" in out

    def test_empty_circuit_fails_target(self, tmp_path, capsys):
        circuit = tmp_path / "empty.txt"
        circuit.write_text("")
        code, out = run_cli(["circuit-verify", str(circuit), "bidder:11"], capsys)
        assert code == 0
        assert "result=fail" in out

    def test_parse_error_exits_1(self, tmp_path, capsys):
        circuit = tmp_path / "bad.txt"
        circuit.write_text("WIBBLE q0\n")
        assert cli.main(["circuit-verify", str(circuit), "bidder:11"]) == 1

    def test_generated_p_circuit(self, tmp_path, capsys):
        from qauction.circuits import build_P_circuit
        from qauction.protocol import AuctionConfig, build_first_price_table, pauli_z_expansion
        expansion = pauli_z_expansion(build_first_price_table(AuctionConfig(m=2, p=2)))
        text = build_P_circuit(expansion, 1.0, 0.5, 4).to_text()
        path = tmp_path / "p.txt"
        path.write_text(text)
        code, out = run_cli(["circuit-verify", str(path), "P:1,0.5"], capsys)
        assert code == 0
        assert "result=pass" in out
        distance = float(next(l for l in out.splitlines() if l.startswith("distance")).split("=")[1])
        assert distance <= 1e-9

    def test_mixing_circuit_with_width(self, tmp_path, capsys):
        from qauction.circuits import build_D_circuit
        path = tmp_path / "d.txt"
        path.write_text(build_D_circuit(1.5, 0.4, 4).to_text())
        code, out = run_cli(["circuit-verify", str(path), "D:1.5,0.4"], capsys)
        assert code == 0
        assert "result=pass" in out

    def test_emit_roundtrip(self, tmp_path, capsys):
        code, out = run_cli(["circuit-verify", "--emit", "collusion:10,11"], capsys)
        assert code == 0
        path = tmp_path / "collusion.txt"
        path.write_text(out)
        code, out = run_cli(["circuit-verify", str(path), "collusion:10,11"], capsys)
        assert code == 0
        assert "result=pass" in out


class TestConfigHandling:
    def test_config_file_and_override(self, tmp_path, capsys):
        cfg = tmp_path / "scenario.cfg"
        cfg.write_text("bids = 10,11\nsteps = 20\ndelta = 1.5\nseed = 7\n")
        code, out = run_cli(["converge", "--config", str(cfg), "--steps", "10"], capsys)
        assert code == 0
        comments, _, rows = parse_csv(out)
        assert comments["steps"] == "10"
        assert len(rows) == 11

    def test_unknown_key_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("stepz = 20\n")
        assert cli.main(["converge", "--config", str(cfg)]) == 1

    def test_unknown_value_rejected(self, capsys):
        assert cli.main(["converge", "--variant", "third"]) == 1
        assert cli.main(["converge", "--bids", "00,11"]) == 1

    def test_no_partial_output_on_error(self, tmp_path):
        target = tmp_path / "out.csv"
        code = cli.main(["converge", "--bids", "10,10", "--out", str(target)])
        assert code == 2
        assert not target.exists()

    def test_deterministic_bytes(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        args = ["attack", "--attack", "probe_basis", "--bids", "10,11",
                "--rounds", "3", "--trials", "3000", "--seed", "5"]
        assert cli.main(args + ["--out", str(a)]) == 0
        assert cli.main(args + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_parallel_points_identical(self, tmp_path):
        # per-point RNG streams make --jobs a pure throughput knob
        serial, parallel = tmp_path / "serial.csv", tmp_path / "parallel.csv"
        args = ["attack", "--attack", "probe_povm", "--bids", "10,11",
                "--rounds", "2", "--trials", "2000", "--seed", "11"]
        assert cli.main(args + ["--out", str(serial)]) == 0
        assert cli.main(args + ["--jobs", "2", "--out", str(parallel)]) == 0
        assert serial.read_bytes() == parallel.read_bytes()
