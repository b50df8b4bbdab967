import numpy as np
import pytest

from iotgraph.power import (PowerConfig, dbm_to_mw, mw_to_dbm,
                            required_transmit_power, received_power,
                            pathloss_db, link_snr, snr_detectable,
                            nearest_gateway, initial_power_assignment,
                            remaining_energy, DepletedEnergyError)


def test_dbm_conversions():
    # [TRIVIAL] 0 dBm = 1 mW; 30 dBm = 1 W; round trip
    assert dbm_to_mw(0.0) == pytest.approx(1.0)
    assert dbm_to_mw(30.0) == pytest.approx(1000.0)
    assert mw_to_dbm(dbm_to_mw(17.3)) == pytest.approx(17.3)


def test_config_defaults_and_validation():
    cfg = PowerConfig()
    assert cfg.nu == 2.0 and cfg.rho_tmax_dbm == 27.0
    # [DERIVED] zeta = 10^((rho_rmin - noise)/10) = 10^-1.3
    assert cfg.zeta == pytest.approx(10.0 ** -1.3)
    with pytest.raises(ValueError):
        PowerConfig(nu=-1.0)
    with pytest.raises(ValueError):
        PowerConfig(rho_tmax_dbm=-70.0)


def test_required_transmit_power_law():
    cfg = PowerConfig(kappa1=2.0, kappa2=5.0, nu=3.0)
    # [TRIVIAL] 2 * 10^3 + 5
    assert required_transmit_power(10.0, cfg) == pytest.approx(2005.0)
    with pytest.raises(ValueError):
        required_transmit_power(0.0, cfg)


def test_received_power_inverse_law():
    # [TRIVIAL] quadrupling distance at nu=2 quarters the power twice
    assert received_power(16.0, 1.0, 4.0, 2.0) == pytest.approx(1.0)


def test_pathloss():
    # [TRIVIAL] 10 * 2 * log10(100) = 40 dB
    assert pathloss_db(100.0, 2.0) == pytest.approx(40.0)
    assert pathloss_db(100.0, 2.0, gamma_db=3.0) == pytest.approx(43.0)


def test_link_snr_consistency_with_sensitivity():
    # [DERIVED] transmitting at rho_rmin + pathloss(d) puts the link SNR
    # exactly at the sensitivity-over-noise ratio zeta
    cfg = PowerConfig()
    d = 731.0
    p = cfg.rho_rmin_dbm + pathloss_db(d, cfg.nu)
    assert link_snr(p, d, cfg) == pytest.approx(cfg.zeta, rel=1e-12)
    assert snr_detectable(link_snr(p, d, cfg), cfg)
    assert not snr_detectable(link_snr(p - 1.0, d, cfg), cfg)


def test_nearest_gateway():
    D = np.array([[5.0, 2.0, 9.0], [1.0, 4.0, 3.0]])
    assert nearest_gateway(D).tolist() == [1, 0]


def test_initial_power_assignment():
    cfg = PowerConfig()
    ends = np.array([[0.0, 0], [3500.0, 0]])
    gws = np.array([[100.0, 0]])
    powers, capped = initial_power_assignment(ends, gws, cfg)
    # node 0 at 100 m: required = -63 + 40 = -23 dBm -> floored at p_tmin
    assert powers[0] == cfg.p_tmin_dbm and not capped[0]
    # node 1 at 3400 m: required = -63 + 20 log10(3400) = 7.63 dBm
    assert powers[1] == pytest.approx(-63.0 + 20.0 * np.log10(3400.0))
    assert not capped[1]
    far, capped2 = initial_power_assignment(np.array([[4.0e6, 0]]), gws, cfg)
    assert far[0] == cfg.rho_tmax_dbm and capped2[0]


def test_remaining_energy():
    cfg = PowerConfig(kappa1=1.0, kappa2=0.0, initial_energy_mj=10.0)
    assert remaining_energy(10.0, cfg, duration=1.0) == pytest.approx(10.0 - 0.1)
