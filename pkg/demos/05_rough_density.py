"""The low-regularity experiment: a distributional source kinks the density
while the value function stays smooth.

The source pairs test functions with the indicator of {x < 1/3} (a line
source along x = 1/3 in divergence form), so the density has a gradient jump
across that line and sits outside H^2.  The jump deliberately avoids the
dyadic mesh lines -- an aligned kink would be exactly representable by P1
functions and the effect would disappear.  There is no closed-form solution;
errors are measured against a reference solve two levels finer, injected
exactly through the nested refinement.

The point of the experiment: the value function keeps its full first-order
H1 rate and the density keeps a first-order L2 rate, while the density's H1
rate visibly degrades -- the value function's accuracy does not pay for the
density's roughness.
"""

import mfgfem as mf

problem = mf.make_rough_density_problem(1.0, mf.huber_ball(1.0), 1.0)
table = mf.run_convergence_study(problem, "xz_square", range(2, 6), "xz",
                                 reference_offset=2)

print(f"{'level':>5} {'ndof':>6} {'err_u_H1':>11} {'eoc':>5} "
      f"{'err_m_H1':>11} {'eoc':>5} {'err_m_L2':>11} {'eoc':>5}")
for row in table.rows():
    print(f"{row['level']:>5} {row['ndof']:>6} {row['err_u_H1']:>11.4e} "
          f"{row['eoc_u_H1']:>5.2f} {row['err_m_H1']:>11.4e} "
          f"{row['eoc_m_H1']:>5.2f} {row['err_m_L2']:>11.4e} "
          f"{row['eoc_m_L2']:>5.2f}")

print()
print(f"fitted slopes: u in H1: {table.fitted_eoc('err_u_h1'):.3f}, "
      f"m in H1: {table.fitted_eoc('err_m_h1'):.3f}, "
      f"m in L2: {table.fitted_eoc('err_m_l2'):.3f}")
print(f"regularity separation (u_H1 minus m_H1 slope): "
      f"{table.fitted_eoc('err_u_h1') - table.fitted_eoc('err_m_h1'):.3f}")
