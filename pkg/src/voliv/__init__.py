"""Short-maturity implied volatility: cumulant expansions of prices and smiles,
Fourier and Monte Carlo reference values, and an option-quote pipeline."""
from .blackscholes import ForwardContract, Smile, bs_put, bs_vega, implied_vol
from .edgeworth import CumulantData, ExpansionResult, atm_asymptotics, iv_expansion, phi_mn, put_expansion, q_density
from .models import (CgmyReturnParams, GammaReturnParams, HestonDLParams, RoughBergomiAsymParams,
                     ThreeHalvesParams, characteristic_function, cumulants)
from .pricer import AtmTermStructure, PricingGrid, term_structure

__version__ = "0.1.0"
