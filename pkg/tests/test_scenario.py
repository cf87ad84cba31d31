import pytest

from fermiflux.errors import ScenarioError
from fermiflux.scenario import bundled_scenarios, dump_scenario, load_scenario, parse_scenario, with_parameter

VALID = """\
name = "pair"
kind = "trajectory"

[system]
modes = [21.1, 21.5]

[options]
rtol = 1e-8

[[reservoir]]
temperature = 0.6
chemical_potential = 20.8

[[reservoir]]
temperature = 1.0
chemical_potential = 16.0
"""


def broken(old, new):
    assert old in VALID
    return VALID.replace(old, new)


class TestBundled:
    def test_all_present(self):
        assert bundled_scenarios() == ["fig1", "fig2", "fig3", "fig4", "five_reservoirs", "slot_example"]

    @pytest.mark.parametrize("path", ["fig1", "fig1.scenario", "scenarios/fig1", "scenarios/fig1.scenario"])
    def test_name_resolution(self, path):
        assert load_scenario(path).name == "fig1"

    def test_fig1_values(self):
        sc = load_scenario("fig1")
        assert sc.system.modes == (21.1, 21.5)
        assert [r.temperature for r in sc.reservoirs] == [0.6, 1.0]
        assert [r.chemical_potential for r in sc.reservoirs] == [20.8, 16.0]
        for r in sc.reservoirs:
            assert r.alpha == 1.5
            assert r.coupling.amplitude == 1e-4
            assert r.coupling.exponent == r.alpha - 1.0

    def test_fig4_coupling_ratios(self):
        res = load_scenario("fig4").reservoirs
        assert len(res) == 4
        for w in (21.2, 21.5):
            g = [r.gamma(w) for r in res]
            assert g[0] == pytest.approx(10 * g[1], rel=1e-15)
            assert g[2] == pytest.approx(10 * g[1], rel=1e-15)
            assert g[3] == pytest.approx(0.05 * g[1], rel=1e-15)

    def test_five_reservoirs(self):
        assert len(load_scenario("five_reservoirs").reservoirs) == 5

    def test_slot_example(self):
        sc = load_scenario("slot_example")
        assert sc.kind == "slot-check"
        assert sc.slot_check.heat == (1.0, -5.0, 20.0, -16.0)
        assert sc.slot_check.temperature == (10.0, 20.0, 60.0, 70.0)

    def test_missing(self):
        with pytest.raises(ScenarioError, match="no bundled scenario"):
            load_scenario("fig9")


class TestValidation:
    def test_valid(self):
        sc = parse_scenario(VALID)
        assert sc.options.rtol == 1e-8
        assert sc.reservoirs[0].alpha == 1.5
        assert sc.plots is False

    def test_non_positive_temperature_names_reservoir(self):
        with pytest.raises(ScenarioError) as exc:
            parse_scenario(broken("temperature = 1.0", "temperature = -1.0"), "bad.scenario")
        err = exc.value
        assert err.line == 15
        assert err.field == "reservoir[2].temperature"
        assert "reservoir 2" in str(err) and "bad.scenario" in str(err)

    def test_unknown_key_is_an_error(self):
        with pytest.raises(ScenarioError) as exc:
            parse_scenario(broken("rtol = 1e-8", "rtol = 1e-8\nrtoll = 1e-9"))
        assert exc.value.line == 9
        assert exc.value.field == "options.rtoll"

    def test_unknown_top_level_table(self):
        with pytest.raises(ScenarioError, match="unknown key"):
            parse_scenario(VALID + "\n[extra]\na = 1\n")

    def test_parse_error_has_line(self):
        with pytest.raises(ScenarioError) as exc:
            parse_scenario(broken("modes = [21.1, 21.5]", "modes = [21.1, 21.5"))
        assert exc.value.line is not None

    def test_rtol_range(self):
        with pytest.raises(ScenarioError) as exc:
            parse_scenario(broken("rtol = 1e-8", "rtol = 0.5"))
        assert exc.value.field == "options.rtol" and exc.value.line == 8

    def test_non_degenerate(self):
        with pytest.raises(ScenarioError, match="x_min") as exc:
            parse_scenario(broken("chemical_potential = 16.0", "chemical_potential = 3.0"))
        assert exc.value.field == "reservoir[2].chemical_potential"

    def test_wrong_type(self):
        with pytest.raises(ScenarioError, match="expected a number"):
            parse_scenario(broken("temperature = 0.6", 'temperature = "hot"'))

    def test_one_reservoir(self):
        text = VALID[: VALID.rindex("[[reservoir]]")]
        with pytest.raises(ScenarioError, match="at least two"):
            parse_scenario(text)

    def test_bad_modes(self):
        with pytest.raises(ScenarioError) as exc:
            parse_scenario(broken("modes = [21.1, 21.5]", "modes = [21.1, -1.0]"))
        assert exc.value.field == "system.modes"

    def test_slot_check_mismatch(self):
        text = 'name = "s"\nkind = "slot-check"\n[slot_check]\nheat = [1.0, -1.0]\ntemperature = [1.0]\n'
        with pytest.raises(ScenarioError, match="heat flows"):
            parse_scenario(text)


class TestRoundTrip:
    @pytest.mark.parametrize("name", bundled_scenarios())
    def test_bundled(self, name):
        sc = load_scenario(name)
        again = parse_scenario(dump_scenario(sc))
        assert again == sc

    def test_awkward_floats(self):
        sc = parse_scenario(broken("temperature = 0.6", "temperature = 0.1234567890123456789"))
        assert parse_scenario(dump_scenario(sc)) == sc


class TestWithParameter:
    def test_reservoir_field(self):
        sc = with_parameter(load_scenario("fig1"), "reservoir[2].chemical_potential", 17.0)
        assert sc.reservoirs[1].chemical_potential == 17.0
        assert sc.reservoirs[0] == load_scenario("fig1").reservoirs[0]

    def test_option_and_mode(self):
        sc = with_parameter(load_scenario("fig1"), "options.rtol", 1e-7)
        assert sc.options.rtol == 1e-7
        sc = with_parameter(sc, "system.modes[2]", 22.0)
        assert sc.system.modes == (21.1, 22.0)

    def test_revalidated(self):
        with pytest.raises(ScenarioError, match="temperature"):
            with_parameter(load_scenario("fig1"), "reservoir[1].temperature", 0.0)

    @pytest.mark.parametrize("path", ["reservoir[3].temperature", "reservoir[1].colour", "system.modes[5]", "nonsense"])
    def test_bad_paths(self, path):
        with pytest.raises(ScenarioError):
            with_parameter(load_scenario("fig1"), path, 1.0)
