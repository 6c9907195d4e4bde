import json

import pytest

import mfgfem as mf
from mfgfem import cli
from mfgfem.errors import ConfigurationError


def write_config(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestConfigParsing:
    def test_defaults_and_overrides(self, tmp_path):
        path = write_config(tmp_path, """
            # comment line
            mesh.family = acute_rhombus
            mesh.level = 3
            mesh.levels = 2:4
            solver.damping = 0.25
            hamiltonian.R = 2.0
            seed = 7
        """)
        config = cli.parse_config(path)
        assert config.mesh_family == "acute_rhombus"
        assert config.mesh_level == 3
        assert config.mesh_levels == (2, 3, 4)
        assert config.damping == 0.25
        assert config.hamiltonian_R == 2.0
        assert config.seed == 7
        assert config.nu == 1.0  # untouched default

    def test_comma_levels_and_vectors(self, tmp_path):
        path = write_config(tmp_path, """
            mesh.levels = 2, 3, 5
            hamiltonian.kind = finite
            hamiltonian.drifts = 1 0; -1 0; 0 1
            hamiltonian.costs = 0, 0.1, 0.2
            hamiltonian.epsilon = 0.05
        """)
        config = cli.parse_config(path)
        assert config.mesh_levels == (2, 3, 5)
        assert config.hamiltonian_drifts == ((1.0, 0.0), (-1.0, 0.0), (0.0, 1.0))
        assert config.hamiltonian_costs == (0.0, 0.1, 0.2)

    def test_unknown_key(self, tmp_path):
        path = write_config(tmp_path, "mesh.resolution = 4\n")
        with pytest.raises(ConfigurationError):
            cli.parse_config(path)

    def test_bad_value(self, tmp_path):
        path = write_config(tmp_path, "mesh.level = four\n")
        with pytest.raises(ConfigurationError):
            cli.parse_config(path)

    def test_hash_stable(self, tmp_path):
        a = cli.parse_config(write_config(tmp_path, "seed = 1\n", "a.cfg"))
        b = cli.parse_config(write_config(tmp_path, "seed = 1\n", "b.cfg"))
        assert cli.config_hash(a) == cli.config_hash(b)
        c = cli.parse_config(write_config(tmp_path, "seed = 2\n", "c.cfg"))
        assert cli.config_hash(a) != cli.config_hash(c)

    def test_stabilization_none_needs_override(self, tmp_path):
        config = cli.parse_config(write_config(tmp_path, "stabilization = none\n"))
        with pytest.raises(ConfigurationError):
            cli.resolve_stabilization(config)
        config.allow_unstabilized = True
        assert cli.resolve_stabilization(config) == "none"


class TestCheckMesh:
    def test_xz_square_passes(self, tmp_path, capsys):
        path = write_config(tmp_path, "mesh.family = xz_square\nmesh.level = 3\n")
        code = cli.main(["check-mesh", path])
        payload = json.loads(capsys.readouterr().out)
        assert code == cli.EXIT_OK
        assert payload["xz_satisfied"] is True
        assert payload["stabilization"] == "xz"

    def test_rhombus_acute_theta(self, tmp_path, capsys):
        path = write_config(
            tmp_path, "mesh.family = acute_rhombus\nmesh.level = 3\n")
        code = cli.main(["check-mesh", path])
        payload = json.loads(capsys.readouterr().out)
        assert code == cli.EXIT_OK
        assert payload["acute_theta"] == pytest.approx(0.5236, abs=1e-4)

    def test_square_with_acute_request_fails(self, tmp_path, capsys):
        path = write_config(
            tmp_path, "mesh.family = xz_square\nstabilization = acute\n")
        code = cli.main(["check-mesh", path])
        payload = json.loads(capsys.readouterr().out)
        assert code == cli.EXIT_VERIFY_FAILED
        assert payload["acute_theta"] == 0.0

    def test_file_mesh(self, tmp_path, capsys):
        mesh_path = tmp_path / "mesh.txt"
        mf.write_mesh(mf.generate_acute_rhombus(2), mesh_path)
        path = write_config(tmp_path, f"mesh.family = file:{mesh_path}\nmesh.level = 0\n")
        code = cli.main(["check-mesh", path])
        payload = json.loads(capsys.readouterr().out)
        assert code == cli.EXIT_OK
        assert payload["num_triangles"] == 8

    def test_bad_mesh_file_exit_2(self, tmp_path, capsys):
        mesh_path = tmp_path / "bad.txt"
        mesh_path.write_text("MFGMESH 1\nvertices 3\n0 0\n1 0\n0 1\ntriangles 1\n0 1 9\n")
        path = write_config(tmp_path, f"mesh.family = file:{mesh_path}\n")
        assert cli.main(["check-mesh", path]) == cli.EXIT_INPUT_ERROR

    def test_missing_config_exit_2(self):
        assert cli.main(["check-mesh", "/nonexistent/run.cfg"]) == cli.EXIT_INPUT_ERROR


class TestSolve:
    def test_zero_problem_writes_zero_solutions(self, tmp_path):
        out = tmp_path / "out"
        path = write_config(tmp_path, f"""
            problem.kind = zero
            mesh.level = 3
            output.dir = {out}
        """)
        assert cli.main(["solve", path]) == cli.EXIT_OK
        for name in ("solution_u.csv", "solution_m.csv"):
            lines = (out / name).read_text().splitlines()
            assert lines[0].startswith("# config ")
            values = [float(line.split(",")[3]) for line in lines[2:]]
            assert max(abs(v) for v in values) == 0.0
        telemetry = json.loads((out / "telemetry.json").read_text())
        assert telemetry["converged"] is True
        assert telemetry["outer_iters"] == 1

    def test_sine_level3_converges(self, tmp_path):
        out = tmp_path / "out"
        path = write_config(tmp_path, f"""
            problem.kind = manufactured
            mesh.level = 3
            output.dir = {out}
        """)
        assert cli.main(["solve", path]) == cli.EXIT_OK
        telemetry = json.loads((out / "telemetry.json").read_text())
        assert telemetry["residual1_dual"] <= 1e-9
        assert telemetry["residual2_dual"] <= 1e-9

    def test_forced_nonconvergence_exit_3(self, tmp_path):
        out = tmp_path / "out"
        path = write_config(tmp_path, f"""
            problem.kind = manufactured
            mesh.level = 3
            solver.max_outer = 1
            output.dir = {out}
        """)
        assert cli.main(["solve", path]) == cli.EXIT_NONCONVERGENCE
        telemetry = json.loads((out / "telemetry.json").read_text())
        assert telemetry["converged"] is False
        assert len(telemetry["history"]) == 1

    def test_bit_identical_reruns(self, tmp_path):
        # identical config (including output.dir) and seed: byte-identical files
        out = tmp_path / "out"
        path = write_config(tmp_path, f"""
            problem.kind = manufactured
            mesh.level = 3
            output.dir = {out}
        """)
        names = ("solution_u.csv", "solution_m.csv", "telemetry.json")
        blobs = []
        for _ in range(2):
            assert cli.main(["solve", path]) == cli.EXIT_OK
            blobs.append(b"".join((out / name).read_bytes() for name in names))
        assert blobs[0] == blobs[1]


class TestConvergence:
    def test_two_levels_rejected(self, tmp_path):
        path = write_config(tmp_path, "mesh.levels = 2:3\n")
        assert cli.main(["convergence", path]) == cli.EXIT_INPUT_ERROR

    def test_acute_family_all_verdicts_pass(self, tmp_path):
        out = tmp_path / "out"
        path = write_config(tmp_path, f"""
            mesh.family = acute_rhombus
            mesh.levels = 2:4
            output.dir = {out}
        """)
        assert cli.main(["convergence", path]) == cli.EXIT_OK
        report = json.loads((out / "report.json").read_text())
        assert report["all_pass"] is True
        assert (out / "eoc.csv").read_text().startswith("# config ")

    def test_xz_family_documents_l2_defect(self, tmp_path):
        # the H1 verdicts hold; the L2 window cannot hold for non-vanishing
        # stabilization (first-order consistency perturbation) and is reported
        # as a failed verdict -- see the acceptance suite for the full analysis
        out = tmp_path / "out"
        path = write_config(tmp_path, f"""
            mesh.family = xz_square
            mesh.levels = 2:5
            output.dir = {out}
        """)
        code = cli.main(["convergence", path])
        report = json.loads((out / "report.json").read_text())
        assert report["verdicts"]["eoc_u_H1"]["pass"] is True
        assert report["verdicts"]["eoc_m_H1"]["pass"] is True
        assert report["verdicts"]["eoc_u_L2"]["pass"] is False
        assert code == cli.EXIT_VERIFY_FAILED

    def test_rough_instance_verdicts(self, tmp_path):
        out = tmp_path / "out"
        path = write_config(tmp_path, f"""
            problem.kind = rough
            mesh.levels = 2:4
            reference_offset = 2
            output.dir = {out}
        """)
        assert cli.main(["convergence", path]) == cli.EXIT_OK
        report = json.loads((out / "report.json").read_text())
        assert set(report["verdicts"]) == {"eoc_u_H1", "eoc_m_L2", "eoc_m_H1_below_u"}
        assert report["all_pass"] is True


class TestVerify:
    def make_config(self, tmp_path, out, seed=0):
        return write_config(tmp_path, f"""
            mesh.level = 3
            verify.trials = 40
            verify.pairs = 10
            verify.gradient_samples = 400
            seed = {seed}
            output.dir = {out}
        """, name=f"verify_{seed}.cfg")

    def test_default_suite_passes(self, tmp_path, capsys):
        out = tmp_path / "out"
        path = self.make_config(tmp_path, out)
        assert cli.main(["verify", path]) == cli.EXIT_OK
        report = json.loads((out / "report.json").read_text())
        assert report["all_pass"] is True
        assert set(report["results"]) >= {"h1_tensor", "h2_dmp", "l2_monotonicity",
                                          "dmp_at_solution", "gradient_check"}

    def test_seed_does_not_change_verdicts(self, tmp_path, capsys):
        outs = []
        for seed in (0, 1):
            out = tmp_path / f"out{seed}"
            path = self.make_config(tmp_path, out, seed=seed)
            assert cli.main(["verify", path]) == cli.EXIT_OK
            outs.append(json.loads((out / "report.json").read_text()))
        assert outs[0]["all_pass"] == outs[1]["all_pass"] is True

    def test_bad_omega_factor_rejected_before_suites(self, tmp_path):
        path = write_config(tmp_path, """
            mesh.level = 3
            stabilization.omega_factor = 0.1
        """)
        assert cli.main(["verify", path]) == cli.EXIT_INPUT_ERROR
