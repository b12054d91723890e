"""capmc: kernel energies and capacities of simulated random fractal sets.

Library layout mirrors the pipeline: kernels -> paths -> dyadic histograms
-> energies -> capacities -> experiments; `capmc.cli` is the experiment
front end (installed as the `capmc` command).
"""

__version__ = "0.1.0"

from .kernels import (
    Kernel,
    KernelError,
    KernelSpecError,
    NonCapacitableKernelError,
    constant_kernel,
    dyadic_increment,
    log_adjusted,
    parse_kernel_spec,
    riesz_kernel,
    smooth,
    smoothed_value,
    stable_potential_kernel,
    table_kernel,
)
from .measures import WeightedMeasure
from .paths import (
    LocalTimeProfile,
    PathSample,
    ZeroSetSample,
    excursion_count,
    local_time_measure,
    local_time_profile,
    occupation_measure,
    sample_brownian,
    sample_stable,
    zero_set,
)
from .dyadic import (
    BinningError,
    DyadicHistogram,
    NearestDistanceIndex,
    bin_measure,
    box_count,
    nearest_distance,
    sum_squares,
)
from .energy import (
    direct_energy,
    dyadic_energy,
    gaussian_energy,
    gaussian_energy_fast,
    quadratic_variation,
    scaled_S_profile,
)
from .capacity import (
    CapacityEstimate,
    cantor_points,
    capacity_upper_bound,
    equilibrium_capacity,
    equilibrium_measure,
    hitting_probability_bracket,
    reference_cantor_capacity,
    reference_square_capacity,
    sausage_capacity,
)
