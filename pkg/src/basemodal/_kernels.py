"""Numba time-marching kernel for the virtual test rig.

One fixed-step RK4 integrator for the base-excited modal ODE with an
embedded phase-locked loop (synchronous demodulation + PI(D) frequency
control) and an optional base-velocity amplitude controller. The hysteretic
Jenkins state is updated once per step via the return map.

State vector ``aux`` layout (mutated in place):
    0 slider displacement        6 filtered phase derivative
    1 oscillator phase psi       7 velocity-controller command
    2 PLL integrator             8 amplitude-saturation flag
    3 demod in-phase state       9 current frequency Omega
    4 demod quadrature state    10 demod in-phase, second stage
    5 previous measured phase   11 demod quadrature, second stage

The demodulator uses two cascaded first-order low-pass stages so the
2*Omega mixing product is attenuated quadratically; a single stage leaves
a phase ripple of lp_ratio/2 radians on the error signal.
"""

import numpy as np
from numba import njit

TWO_PI = 2.0 * np.pi


@njit(cache=True)
def march(eta, etad, aux, nsteps, dt,
          omega2, cdiag, gamma,
          nl_type, phi_c, kt, muN, Kmat, ea2l,
          ctrl_mode, level,
          Om0, Kp, Ki, Kd, target_phase, lp_ratio, Om_lo, Om_hi,
          Kpa, Kia, phi_ref,
          rec_every, out_psi, out_Om, out_err, out_eta):
    n = eta.size
    s = aux[0]
    psi = aux[1]
    integ = aux[2]
    lpI = aux[3]
    lpQ = aux[4]
    eprev = aux[5]
    dfilt = aux[6]
    vcmd = aux[7]
    Om = aux[9]
    lpI2 = aux[10]
    lpQ2 = aux[11]

    k1 = np.empty(2 * n)
    k2 = np.empty(2 * n)
    k3 = np.empty(2 * n)
    k4 = np.empty(2 * n)
    y = np.empty(2 * n)
    yt = np.empty(2 * n)
    gnl = np.empty(n)
    irec = 0

    for step in range(nsteps):
        if ctrl_mode == 0:
            A = level * Om * Om  # commanded base-displacement amplitude
        else:
            A = Om * vcmd  # commanded via base-velocity loop

        for j in range(n):
            y[j] = eta[j]
            y[n + j] = etad[j]

        # RK4 stages with frozen Om, A and slider state
        for stage in range(4):
            if stage == 0:
                ph = psi
                for j in range(2 * n):
                    yt[j] = y[j]
            elif stage == 1:
                ph = psi + 0.5 * dt * Om
                for j in range(2 * n):
                    yt[j] = y[j] + 0.5 * dt * k1[j]
            elif stage == 2:
                ph = psi + 0.5 * dt * Om
                for j in range(2 * n):
                    yt[j] = y[j] + 0.5 * dt * k2[j]
            else:
                ph = psi + dt * Om
                for j in range(2 * n):
                    yt[j] = y[j] + dt * k3[j]

            # nonlinear modal force at the stage displacement
            if nl_type == 1:
                w = 0.0
                for j in range(n):
                    w += phi_c[j] * yt[j]
                f = kt * (w - s)
                if f > muN:
                    f = muN
                elif f < -muN:
                    f = -muN
                for j in range(n):
                    gnl[j] = phi_c[j] * f
            elif nl_type == 2:
                quad = 0.0
                for j in range(n):
                    acc = 0.0
                    for l in range(n):
                        acc += Kmat[j, l] * yt[l]
                    gnl[j] = acc
                    quad += yt[j] * acc
                for j in range(n):
                    gnl[j] = ea2l * quad * gnl[j]
            else:
                for j in range(n):
                    gnl[j] = 0.0

            qbdd = -A * np.cos(ph)
            if stage == 0:
                kk = k1
            elif stage == 1:
                kk = k2
            elif stage == 2:
                kk = k3
            else:
                kk = k4
            for j in range(n):
                kk[j] = yt[n + j]
                kk[n + j] = (-omega2[j] * yt[j] - cdiag[j] * yt[n + j]
                             - gnl[j] - gamma[j] * qbdd)

        for j in range(n):
            eta[j] = y[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
            etad[j] = y[n + j] + dt / 6.0 * (k1[n + j] + 2.0 * k2[n + j]
                                             + 2.0 * k3[n + j] + k4[n + j])

        # return-map slider update once per step
        if nl_type == 1:
            w = 0.0
            for j in range(n):
                w += phi_c[j] * eta[j]
            f = kt * (w - s)
            if f > muN:
                s = w - muN / kt
            elif f < -muN:
                s = w + muN / kt

        psi += dt * Om
        if psi > TWO_PI:
            psi -= TWO_PI

        # synchronous demodulation of the reference sensor
        wr = 0.0
        for j in range(n):
            wr += phi_ref[j] * eta[j]
        wc = lp_ratio * Om
        alpha = dt * wc
        lpI += alpha * (2.0 * wr * np.cos(psi) - lpI)
        lpQ += alpha * (-2.0 * wr * np.sin(psi) - lpQ)
        lpI2 += alpha * (lpI - lpI2)
        lpQ2 += alpha * (lpQ - lpQ2)
        pm = np.arctan2(lpQ2, lpI2)
        e = pm - target_phase
        while e > np.pi:
            e -= TWO_PI
        while e <= -np.pi:
            e += TWO_PI

        # derivative of the measured phase: continuous across target steps
        dp = pm - eprev
        while dp > np.pi:
            dp -= TWO_PI
        while dp <= -np.pi:
            dp += TWO_PI
        dfilt += alpha * (dp / dt - dfilt)
        eprev = pm
        integ += dt * e
        if Ki > 0.0:  # anti-windup clamp
            lim = 0.5 * Om0 / Ki
            if integ > lim:
                integ = lim
            elif integ < -lim:
                integ = -lim
        Om = Om0 + Kp * e + Ki * integ + Kd * dfilt
        if Om < Om_lo:
            Om = Om_lo
        elif Om > Om_hi:
            Om = Om_hi

        # base-velocity amplitude controller (velocity form PI)
        if ctrl_mode == 1:
            ea = level - vcmd
            vcmd += dt * Kia * ea
            if vcmd < 0.0:
                vcmd = 0.0
                aux[8] = 1.0
            elif vcmd > 10.0 * level:
                vcmd = 10.0 * level
                aux[8] = 1.0

        if step % rec_every == 0:
            out_psi[irec] = psi
            out_Om[irec] = Om
            out_err[irec] = e
            for j in range(n):
                out_eta[irec, j] = eta[j]
            irec += 1

    aux[0] = s
    aux[1] = psi
    aux[2] = integ
    aux[3] = lpI
    aux[4] = lpQ
    aux[5] = eprev
    aux[6] = dfilt
    aux[7] = vcmd
    aux[9] = Om
    aux[10] = lpI2
    aux[11] = lpQ2
    return irec
