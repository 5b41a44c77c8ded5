"""Build scalar expressions and take repeated derivatives.

The engine reuses one idea throughout the library: a gradient is new
graph, not a number, so you can differentiate the result again, to any
order, including through network parameters.
"""

import numpy as np

from gpinn import autodiff as ad
from gpinn.autodiff import Graph, check_grad, grad

g = Graph()
x = g.input(0.7)

# u = x sin(3x) + tanh(x)^2
u = x * ad.sin(3.0 * x) + ad.tanh(x) ** 2

d1 = grad(u, [x])[0]
d2 = grad(d1, [x])[0]
d3 = grad(d2, [x])[0]
print(f"u        = {u.value:.12f}")
print(f"u'       = {d1.value:.12f}")
print(f"u''      = {d2.value:.12f}")
print(f"u'''     = {d3.value:.12f}")

# every derivative is checked against central finite differences
for order in (1, 2, 3):
    rel = check_grad(lambda z: z * ad.sin(3.0 * z) + ad.tanh(z) ** 2, 0.7, order)
    print(f"order {order}: AD vs finite differences, relative discrepancy {rel:.2e}")

# mixed partials commute
g2 = Graph()
a, b = g2.input(0.3), g2.input(1.1)
f = ad.exp(a * b) * ad.cos(a - b)
fab = grad(grad(f, [a])[0], [b])[0].value
fba = grad(grad(f, [b])[0], [a])[0].value
print(f"d2f/dadb = {fab:.12f}, d2f/dbda = {fba:.12f}, diff = {abs(fab-fba):.1e}")

# batched re-evaluation of a compiled subgraph
from gpinn.compiled import Program

prog = Program([u, d1], variables=[], batch_variables=[x])
xs = np.linspace(0.1, 1.5, 5)
vals = prog.run(None, xs[None, :])
print("x:      ", np.array2string(xs, precision=3))
print("u(x):   ", np.array2string(vals[0], precision=6))
print("u'(x):  ", np.array2string(vals[1], precision=6))
