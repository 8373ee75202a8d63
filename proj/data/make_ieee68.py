import math
from collections import defaultdict
ws = 2*math.pi*60
lines = """1 2 0.0035 0.0411
1 30 0.0008 0.0074
2 3 0.0013 0.0151
2 25 0.0070 0.0086
2 53 0 0.0181
3 4 0.0013 0.0213
3 18 0.0011 0.0133
4 5 0.0008 0.0128
4 14 0.0008 0.0129
5 6 0.0002 0.0026
5 8 0.0008 0.0112
6 7 0.0006 0.0092
6 11 0.0007 0.0082
6 54 0 0.0250
7 8 0.0004 0.0046
8 9 0.0023 0.0363
9 30 0.0019 0.0183
10 11 0.0004 0.0043
10 13 0.0004 0.0043
10 55 0 0.0200
12 11 0.0016 0.0435
12 13 0.0016 0.0435
13 14 0.0009 0.0101
14 15 0.0018 0.0217
15 16 0.0009 0.0094
16 17 0.0007 0.0089
16 19 0.0016 0.0195
16 21 0.0008 0.0135
16 24 0.0003 0.0059
17 18 0.0007 0.0082
17 27 0.0013 0.0173
19 20 0.0007 0.0138
19 56 0.0007 0.0142
20 57 0.0009 0.0180
21 22 0.0008 0.0140
22 23 0.0006 0.0096
22 58 0 0.0143
23 24 0.0022 0.0350
23 59 0.0005 0.0272
25 26 0.0032 0.0323
25 60 0.0006 0.0232
26 27 0.0014 0.0147
26 28 0.0043 0.0474
26 29 0.0057 0.0625
28 29 0.0014 0.0151
29 61 0.0008 0.0156
9 30 0.0019 0.0183
9 36 0.0022 0.0196
9 36 0.0022 0.0196
36 37 0.0005 0.0045
34 36 0.0033 0.0111
35 34 0.0001 0.0074
33 34 0.0011 0.0157
32 33 0.0008 0.0099
30 31 0.0013 0.0187
30 32 0.0024 0.0288
1 31 0.0016 0.0163
31 38 0.0011 0.0147
33 38 0.0036 0.0444
38 46 0.0022 0.0284
46 49 0.0018 0.0274
1 47 0.0013 0.0188
47 48 0.0025 0.0268
47 48 0.0025 0.0268
48 40 0.0020 0.0220
35 45 0.0007 0.0175
37 43 0.0005 0.0276
43 44 0.0001 0.0011
44 45 0.0025 0.0730
39 44 0 0.0411
39 45 0 0.0839
45 51 0.0004 0.0105
50 52 0.0012 0.0288
50 51 0.0009 0.0221
49 52 0.0076 0.1141
52 42 0.0040 0.0600
42 41 0.0040 0.0600
41 40 0.0060 0.0840
31 62 0 0.0260
32 63 0 0.0130
36 64 0 0.0075
37 65 0 0.0033
41 66 0 0.0015
42 67 0 0.0015
52 68 0 0.0030
1 27 0.0320 0.3200"""
loads = {1:2.527,3:3.22,4:5.00,7:2.34,8:5.22,9:1.04,12:0.09,15:3.20,16:3.29,18:1.58,20:6.80,21:2.74,23:2.48,24:3.09,25:2.24,26:1.39,27:2.81,28:2.06,29:2.84,33:1.12,36:1.02,39:2.67,40:0.6563,41:10.00,42:11.50,44:2.6755,45:2.08,46:1.507,47:2.0312,48:2.412,49:1.64,50:1.00,51:3.37,52:24.70}
H=[42.0,30.2,35.8,28.6,26.0,34.8,26.4,24.3,34.5,31.0,28.2,92.3,248.0,300.0,300.0,225.0]
xd=[0.031,0.0697,0.0531,0.0436,0.132,0.05,0.049,0.057,0.057,0.0457,0.018,0.031,0.0055,0.00285,0.00285,0.0071]
pm=[2.50,5.45,6.50,6.32,5.052,7.00,5.60,5.40,8.00,5.00,10.00,13.50,35.91,17.85,10.00,40.00]
area=[1]*9+[2]*4+[3,4,5]
total_load=sum(loads.values())
scale=total_load/sum(pm)
pm=[round(p*scale,6) for p in pm]
pm[12]=round(total_load-sum(pm[:12])-sum(pm[13:]),6)
out=[]
out.append("# NETS-NYPS 16-machine 68-bus test system, DC surrogate data.")
out.append("# Per-unit on a 100 MVA base. Susceptance b = 1/x of the series reactance.")
out.append("# Generator inertia M = 2H/ws (pu s^2/rad), damping D (pu s/rad),")
out.append("# droop gain 1/R (pu power per pu frequency), governor lag Tg (s),")
out.append("# transient reactance xd (pu; 0 puts the rotor on the terminal bus).")
out.append("# Dispatch scaled uniformly so generation matches the listed load.")
out.append("")
out.append("[buses]")
out.append("id,type,load")
genbus=list(range(53,69))
for b in range(1,69):
    out.append(f"{b},{'generator' if b in genbus else 'load'},{loads.get(b,0.0):.6g}")
out.append("")
out.append("[lines]")
out.append("from,to,susceptance")
for l in lines.splitlines():
    f,t,r,x=l.split(); out.append(f"{f},{t},{1/float(x):.10g}")
out.append("")
out.append("[generators]")
out.append("bus,inertia,damping,droop_gain,governor_tc,participation,area,pm,xd")
areasum=defaultdict(float)
for i in range(16): areasum[area[i]]+=pm[i]
for i in range(16):
    M=2*H[i]/ws
    D=2.0*M
    part=pm[i]/areasum[area[i]]
    out.append(f"{genbus[i]},{M:.10g},{D:.10g},{25*pm[i]:.10g},0.5,{part:.17g},{area[i]},{pm[i]:.10g},{xd[i]:.10g}")
open('/root/proj/data/ieee68.net','w').write("\n".join(out)+"\n")
print(total_load, pm[12], len(lines.splitlines()))
# connectivity
adj=defaultdict(set)
for l in lines.splitlines():
    f,t,_,_=map(float,l.split()); adj[int(f)].add(int(t)); adj[int(t)].add(int(f))
seen={1};st=[1]
while st:
    u=st.pop()
    for v in adj[u]:
        if v not in seen: seen.add(v);st.append(v)
print(len(seen))
