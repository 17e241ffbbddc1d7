import numpy as np, sys
LAM=0.5
def tail_factor(y0, K, step, edge_log, t):
    # sum_{j>K} exp(-t(log1p((y0+j step)^2) - edge_log)), explicit 200 terms + integral
    j = np.arange(K+1, K+201)[None,:]
    yy = y0[:,None] + j*step
    s = np.exp(-t*(np.log1p(yy*yy) - edge_log[:,None])).sum(axis=1)
    X = K + 200.5
    u = y0/step
    s += np.exp(t*edge_log) * abs(step)**(-2*t) * (X+u)**(1-2*t)/(2*t-1)
    return s
def levels(a, depth, budget, t, tail=True):
    K=(budget-1)//2
    ks=np.arange(-K,K+1)
    pts=np.array([a]); logw=np.zeros(1)
    out=[]
    for n in range(depth):
        y0=np.arctan(pts/LAM)
        fp=np.log(LAM+pts*pts/LAM)
        Y=y0[:,None]+ks[None,:]*np.pi
        lf=fp[:,None]+np.log1p(Y*Y)-np.log1p(pts*pts)[:,None]
        lw=logw[:,None]-t*lf
        if tail:
            for side,idx in ((1,-1),(-1,0)):
                edge=np.log1p(Y[:,idx]**2)
                # y0 + j*step with step=side*pi: for negative side use -y0 to keep formula symmetric
                tf=tail_factor(side*y0, K, np.pi, edge, t)
                lw[:,idx]+=np.log1p(tf)
        pts=Y.ravel(); logw=lw.ravel()
        m=logw.max(); out.append(m+np.log(np.exp(logw-m).sum()))
    return np.array(out)
a=1.1655611852072112
for budget,depth in [(5,7),(9,6),(15,5),(21,4)]:
    for t in (0.6,0.7,0.8):
        l=levels(a,depth,budget,t)
        n=np.arange(1,depth+1)
        slope=np.polyfit(n,l,1)[0]
        print(budget,depth,t,'slope',round(slope,5),'incr',np.round(np.diff(l),5))
