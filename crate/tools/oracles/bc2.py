import numpy as np, sys
from boxcount_preview import render, boxcount
res=int(sys.argv[1])
x0,x1=1.1,2.0416
h=(x1-x0)/res
for thr in [0.2,0.5,1.0]:
    occ=render(lambda z:0.5*np.tan(z),x0,x1,-(x1-x0)/2+h/2,(x1-x0)/2+h/2,res,res,80,thr)
    print(thr, occ.sum())
    for lv in [range(0,8),range(1,8),range(2,9),range(0,10),range(2,10)]:
        sl,out=boxcount(occ,lv); print(' ',list(lv),round(sl,4),[o[1] for o in out])
