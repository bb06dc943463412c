"""Print the noise-intensity to temperature table."""
import sys

from solgate.experiments import NOISE_GAMMAS, gamma_to_temperature

if __name__ == "__main__":
    gammas = [float(g) for g in sys.argv[1:]] or NOISE_GAMMAS
    print("gamma [1/s]  T [K]")
    for g in gammas:
        print(f"{g:11g}  {gamma_to_temperature(g):.1f}")
