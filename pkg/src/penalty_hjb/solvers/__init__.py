import penalty_hjb.solvers.penalty_solver
import penalty_hjb.solvers.policy_solver
